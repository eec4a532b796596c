//! Feasible RIS phase profiles: unit-modulus projection of optimal beams and
//! integer time sharing.
//!
//! The optimizer hands back beam weights over a 4-column basis whose columns
//! are generally not unit modulus. Hardware only applies phases, so each
//! beam is projected onto the unit-modulus set by matching its pattern
//! `|f^T a(p_n)|` over a small grid of probe positions around the target,
//! and the continuous weights are turned into integer transmission counts
//! with every beam used at least once.

use nalgebra::{Complex, DVector};
use std::f64::consts::PI;

use crate::array::{steering, Complex64, RisArray};
use crate::design::{lambda_to_weights, solve_lambda_sdp, BeamBasis, DesignContext, SdpSettings, SdpSolution};
use crate::error::{Error, Result};
use crate::geometry::{cart_to_sph, sph_to_cart, CartesianPoint, SphericalPoint};

/// Four unit-modulus beams with integer time allocations summing to the
/// transmission budget.
#[derive(Debug, Clone)]
pub struct ProfileSchedule {
    beams: [DVector<Complex64>; 4],
    allocations: [u32; 4],
    total_t: u32,
}

impl ProfileSchedule {
    pub fn new(
        beams: [DVector<Complex64>; 4],
        allocations: [u32; 4],
        total_t: u32,
    ) -> Result<Self> {
        let m = beams[0].len();
        for (i, beam) in beams.iter().enumerate() {
            if beam.len() != m {
                return Err(Error::Shape(format!(
                    "beam {i} has {} entries, expected {m}",
                    beam.len()
                )));
            }
            for (e, v) in beam.iter().enumerate() {
                if (v.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidBeam(format!(
                        "beam {i} entry {e} has modulus {}, expected 1",
                        v.norm()
                    )));
                }
            }
        }
        let sum: u32 = allocations.iter().sum();
        if sum != total_t {
            return Err(Error::Schedule(format!(
                "allocations sum to {sum}, expected {total_t}"
            )));
        }
        Ok(ProfileSchedule {
            beams,
            allocations,
            total_t,
        })
    }

    pub fn beams(&self) -> &[DVector<Complex64>; 4] {
        &self.beams
    }

    pub fn allocations(&self) -> &[u32; 4] {
        &self.allocations
    }

    pub fn total_transmissions(&self) -> u32 {
        self.total_t
    }
}

/// Knobs of the pattern-matching projection.
#[derive(Debug, Clone)]
pub struct ProjectionParams {
    /// Number of pattern sample points along the coordinate cuts.
    pub n_points: usize,
    pub max_iters: usize,
    /// Backtracking multiplier applied to the step on rejection.
    pub step_shrink: f64,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            n_points: 64,
            max_iters: 500,
            step_shrink: 0.5,
            tol: 1e-4,
        }
    }
}

impl ProjectionParams {
    fn validate(&self) -> Result<()> {
        if self.n_points < 1 {
            return Err(Error::Shape("projection needs at least one sample point".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Shape(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::Shape(format!(
                "step shrink must be in (0, 1), got {}",
                self.step_shrink
            )));
        }
        Ok(())
    }
}

/// Sample positions for the pattern objective: three coordinate cuts through
/// the target, spanning +-20% in range and +-10 degrees in each angle.
fn pattern_points(target: &CartesianPoint, n: usize) -> Result<Vec<CartesianPoint>> {
    let s = cart_to_sph(target)?;
    let base = n / 3;
    let counts = [n - 2 * base, base, base];
    let ang = 10.0 * PI / 180.0;
    let spans = [
        (0.8 * s.rho, 1.2 * s.rho),
        (s.theta - ang, s.theta + ang),
        (s.phi - ang, s.phi + ang),
    ];
    let mut points = Vec::with_capacity(n);
    for (cut, &count) in counts.iter().enumerate() {
        for i in 0..count {
            let t = if count == 1 {
                0.5
            } else {
                i as f64 / (count - 1) as f64
            };
            let (lo, hi) = spans[cut];
            let v = lo + t * (hi - lo);
            let sp = match cut {
                0 => SphericalPoint::new(v, s.theta, s.phi),
                1 => SphericalPoint::new(s.rho, v, s.phi),
                _ => SphericalPoint::new(s.rho, s.theta, v),
            };
            points.push(sph_to_cart(&sp));
        }
    }
    Ok(points)
}

struct Pattern {
    steers: Vec<DVector<Complex64>>,
    targets: Vec<f64>,
}

fn correlate(steer: &DVector<Complex64>, f: &DVector<Complex64>) -> Complex64 {
    steer
        .iter()
        .zip(f.iter())
        .map(|(a, b)| a * b)
        .fold(Complex::new(0.0, 0.0), |acc, v| acc + v)
}

fn pattern_objective(pattern: &Pattern, f: &DVector<Complex64>) -> f64 {
    pattern
        .steers
        .iter()
        .zip(&pattern.targets)
        .map(|(a, &t)| {
            let g = correlate(a, f).norm();
            (g - t) * (g - t)
        })
        .sum()
}

fn pattern_gradient(pattern: &Pattern, f: &DVector<Complex64>) -> DVector<Complex64> {
    let mut grad = DVector::from_element(f.len(), Complex::new(0.0, 0.0));
    for (a, &t) in pattern.steers.iter().zip(&pattern.targets) {
        let g = correlate(a, f);
        let mag = g.norm();
        if mag == 0.0 {
            continue;
        }
        let w = (mag - t) * (1.0 / mag);
        let scaled = g * w;
        for m in 0..f.len() {
            grad[m] += scaled * a[m].conj();
        }
    }
    grad
}

fn phase_only(u: &DVector<Complex64>) -> DVector<Complex64> {
    // Zero entries map to phase 0 (entry 1).
    u.map(|v| {
        let n = v.norm();
        if n == 0.0 {
            Complex::new(1.0, 0.0)
        } else {
            v / n
        }
    })
}

fn renormalize(raw: &DVector<Complex64>, fallback: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(raw.len(), |m, _| {
        let n = raw[m].norm();
        if n == 0.0 {
            fallback[m]
        } else {
            raw[m] / n
        }
    })
}

/// Projects a beam onto the unit-modulus set by projected gradient descent
/// on the pattern-matching objective
/// `sum_n (|f^T a(p_n)| - c |u^T a(p_n)|)^2` with `c = sqrt(M) / ||u||`.
///
/// The iteration starts from the phase-only beam `exp(j arg(u_m))` and only
/// ever accepts improving steps, so the result is never worse than that
/// initialization; a beam that is already unit modulus is a fixed point and
/// comes back unchanged.
pub fn project_unit_modulus(
    u: &DVector<Complex64>,
    params: &ProjectionParams,
    arr: &RisArray,
    target: &CartesianPoint,
) -> Result<DVector<Complex64>> {
    params.validate()?;
    if u.len() != arr.len() {
        return Err(Error::Shape(format!(
            "beam has {} entries but the array has {}",
            u.len(),
            arr.len()
        )));
    }
    let unorm = u.norm();
    if unorm == 0.0 {
        return Err(Error::InvalidBeam("cannot project the zero beam".into()));
    }

    let points = pattern_points(target, params.n_points)?;
    let mut steers = Vec::with_capacity(points.len());
    for p in &points {
        steers.push(steering(arr, p)?);
    }
    let c = (arr.len() as f64).sqrt() / unorm;
    let targets: Vec<f64> = steers.iter().map(|a| c * correlate(a, u).norm()).collect();
    let pattern = Pattern { steers, targets };

    let mut f = phase_only(u);
    let mut obj = pattern_objective(&pattern, &f);

    for _ in 0..params.max_iters {
        if obj <= 1e-24 {
            break;
        }
        let grad = pattern_gradient(&pattern, &f);
        let gnorm = grad.norm();
        if gnorm == 0.0 {
            break;
        }
        let mut eta = f.norm() / gnorm;
        let mut accepted = None;
        for _ in 0..60 {
            let raw = &f - &grad * Complex::new(eta, 0.0);
            let cand = renormalize(&raw, &f);
            let cobj = pattern_objective(&pattern, &cand);
            if cobj < obj {
                accepted = Some((cand, cobj));
                break;
            }
            eta *= params.step_shrink;
        }
        let Some((cand, cobj)) = accepted else {
            break;
        };
        let rel_drop = (obj - cobj) / obj.max(1e-300);
        f = cand;
        obj = cobj;
        if rel_drop < params.tol {
            break;
        }
    }
    Ok(f)
}

/// Integer time allocation for four beams: largest-remainder apportionment
/// of `weights * total_t` (ties resolved toward the larger weight, then the
/// lower index), then a minimum of one transmission per beam enforced by
/// moving counts from the largest allocations.
pub fn allocate_time(weights: &[f64; 4], total_t: u32) -> Result<[u32; 4]> {
    if total_t < 4 {
        return Err(Error::Schedule(format!(
            "cannot give each of 4 beams a transmission out of {total_t}"
        )));
    }
    let mut w = *weights;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        if *v < -1e-9 || !v.is_finite() {
            return Err(Error::Schedule(format!("weight {i} is invalid: {v}")));
        }
        *v = v.max(0.0);
        sum += *v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Schedule(format!("weights sum to {sum}, expected 1")));
    }
    for v in w.iter_mut() {
        *v /= sum;
    }

    let quotas: Vec<f64> = w.iter().map(|&wi| wi * total_t as f64).collect();
    let mut alloc: [u32; 4] = [0; 4];
    let mut assigned = 0u32;
    for (i, &q) in quotas.iter().enumerate() {
        alloc[i] = q.floor() as u32;
        assigned += alloc[i];
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap()
            .then(w[b].partial_cmp(&w[a]).unwrap())
            .then(a.cmp(&b))
    });
    let leftover = total_t - assigned;
    for k in 0..leftover as usize {
        alloc[order[k % 4]] += 1;
    }

    // Every beam must appear at least once; pull from the largest counts.
    loop {
        let Some(zero_idx) = alloc.iter().position(|&t| t == 0) else {
            break;
        };
        let donor = (0..4)
            .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
            .unwrap();
        debug_assert!(alloc[donor] >= 2);
        alloc[donor] -= 1;
        alloc[zero_idx] += 1;
    }
    Ok(alloc)
}

/// Which side of the feasibility/optimization ordering the schedule uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Solve on the orthonormal basis, then project the beams.
    OptimizeThenConstrain,
    /// Project the beams first, then re-solve the weights on the projected
    /// basis.
    ConstrainThenOptimize,
}

/// Builds a feasible time-shared schedule from a diagonal-allocation
/// solution over the given basis.
pub fn make_schedule(
    sol: &SdpSolution,
    basis: &BeamBasis,
    ctx: &DesignContext,
    params: &ProjectionParams,
    total_t: u32,
    pipeline: Pipeline,
    settings: &SdpSettings,
) -> Result<ProfileSchedule> {
    if !sol.allocation.is_diagonal_only() {
        return Err(Error::Schedule(
            "time sharing needs a diagonal allocation".into(),
        ));
    }
    let mut projected = Vec::with_capacity(4);
    for i in 0..4 {
        projected.push(project_unit_modulus(
            &basis.column(i),
            params,
            ctx.array(),
            ctx.p_ue(),
        )?);
    }
    let beams: [DVector<Complex64>; 4] = projected.try_into().expect("4 beams");

    let weights = match pipeline {
        Pipeline::OptimizeThenConstrain => lambda_to_weights(sol)?,
        Pipeline::ConstrainThenOptimize => {
            let feasible = BeamBasis::from_unit_modulus_columns(beams.clone())?;
            let resolved = solve_lambda_sdp(&feasible, ctx, 1.0, true, settings)?;
            lambda_to_weights(&resolved)?
        }
    };
    let allocations = allocate_time(&weights, total_t)?;
    ProfileSchedule::new(beams, allocations, total_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::build_planar_ris;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn allocate_exact_products() {
        assert_eq!(
            allocate_time(&[0.5, 0.3, 0.15, 0.05], 40).unwrap(),
            [20, 12, 6, 2]
        );
    }

    #[test]
    fn allocate_minimum_one_rule_binds() {
        assert_eq!(
            allocate_time(&[0.97, 0.01, 0.01, 0.01], 10).unwrap(),
            [7, 1, 1, 1]
        );
    }

    #[test]
    fn allocate_symmetric_split() {
        assert_eq!(
            allocate_time(&[0.25, 0.25, 0.25, 0.25], 8).unwrap(),
            [2, 2, 2, 2]
        );
    }

    #[test]
    fn allocate_degenerate_weight_composition() {
        assert_eq!(allocate_time(&[1.0, 0.0, 0.0, 0.0], 40).unwrap(), [37, 1, 1, 1]);
    }

    #[test]
    fn allocate_rejects_small_budget() {
        assert!(matches!(
            allocate_time(&[0.25, 0.25, 0.25, 0.25], 3),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn schedule_invariants_enforced() {
        let beam = DVector::from_element(4, Complex::new(1.0, 0.0));
        let beams = [beam.clone(), beam.clone(), beam.clone(), beam.clone()];
        assert!(ProfileSchedule::new(beams.clone(), [1, 1, 1, 1], 4).is_ok());
        assert!(matches!(
            ProfileSchedule::new(beams.clone(), [1, 1, 1, 2], 4),
            Err(Error::Schedule(_))
        ));
        let bad = DVector::from_element(4, Complex::new(0.5, 0.0));
        assert!(matches!(
            ProfileSchedule::new(
                [bad, beam.clone(), beam.clone(), beam.clone()],
                [1, 1, 1, 1],
                4
            ),
            Err(Error::InvalidBeam(_))
        ));
    }

    fn test_array() -> RisArray {
        let lambda = 0.0107;
        build_planar_ris(8, 8, lambda / 2.0, lambda).unwrap()
    }

    #[test]
    fn unit_modulus_input_is_a_fixed_point() {
        let arr = test_array();
        let target = CartesianPoint::new(1.0, 2.0, 1.0);
        let a = steering(&arr, &target).unwrap();
        let u = a.map(|v| v.conj());
        let f = project_unit_modulus(&u, &ProjectionParams::default(), &arr, &target).unwrap();
        for m in 0..arr.len() {
            assert_relative_eq!(f[m].re, u[m].re, epsilon = 1e-15);
            assert_relative_eq!(f[m].im, u[m].im, epsilon = 1e-15);
        }
        // Aligned correlation: |u^H f| = M.
        let corr: Complex64 = u
            .iter()
            .zip(f.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert_relative_eq!(corr.norm(), arr.len() as f64, max_relative = 1e-12);
    }

    #[test]
    fn projection_never_regresses_from_phase_only_init() {
        let arr = test_array();
        let target = CartesianPoint::new(0.7, 1.5, -0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let u = DVector::from_fn(arr.len(), |_, _| {
                Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let params = ProjectionParams::default();
            let points = pattern_points(&target, params.n_points).unwrap();
            let steers: Vec<_> = points.iter().map(|p| steering(&arr, p).unwrap()).collect();
            let c = (arr.len() as f64).sqrt() / u.norm();
            let targets: Vec<f64> = steers.iter().map(|a| c * correlate(a, &u).norm()).collect();
            let pattern = Pattern { steers, targets };

            let init = phase_only(&u);
            let f = project_unit_modulus(&u, &params, &arr, &target).unwrap();
            let before = pattern_objective(&pattern, &init);
            let after = pattern_objective(&pattern, &f);
            assert!(
                after <= before * (1.0 + 1e-12),
                "objective went up: {before} -> {after}"
            );
            for m in 0..arr.len() {
                assert!((f[m].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_entry_gets_phase_zero() {
        let arr = build_planar_ris(2, 2, 0.005, 0.0107).unwrap();
        let mut u = DVector::from_element(4, Complex::new(0.3, -0.4));
        u[2] = Complex::new(0.0, 0.0);
        let f = project_unit_modulus(
            &u,
            &ProjectionParams {
                max_iters: 0,
                ..ProjectionParams::default()
            },
            &arr,
            &CartesianPoint::new(1.0, 2.0, 1.0),
        )
        .unwrap();
        assert_relative_eq!(f[2].re, 1.0);
        assert_relative_eq!(f[2].im, 0.0);
    }

    #[test]
    fn zero_beam_is_rejected() {
        let arr = build_planar_ris(2, 2, 0.005, 0.0107).unwrap();
        let u = DVector::from_element(4, Complex::new(0.0, 0.0));
        assert!(matches!(
            project_unit_modulus(
                &u,
                &ProjectionParams::default(),
                &arr,
                &CartesianPoint::new(1.0, 2.0, 1.0)
            ),
            Err(Error::InvalidBeam(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn allocation_is_budget_exact_with_minimums(
            raw in prop::array::uniform4(0.0_f64..1.0),
            total in 4u32..500,
        ) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 1e-6);
            let w = [raw[0] / sum, raw[1] / sum, raw[2] / sum, raw[3] / sum];
            let alloc = allocate_time(&w, total).unwrap();
            prop_assert_eq!(alloc.iter().sum::<u32>(), total);
            for (i, &t) in alloc.iter().enumerate() {
                prop_assert!(t >= 1, "beam {} starved", i);
                // Within one of the ideal share plus the reservation effect.
                let ideal = w[i] * total as f64;
                prop_assert!((t as f64 - ideal).abs() <= 4.0);
            }
        }
    }
}
