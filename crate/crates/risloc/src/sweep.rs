//! Experiment sweeps: PEB versus RIS-UE distance for a set of designs, and
//! beam-gain cuts along the spherical coordinates.
//!
//! The UE walks the path `(1, d, 1)` meters as `d` sweeps the distance list.
//! Every point gets its own seed-derived RNG stream (`seed xor point index`)
//! so serial and parallel evaluation orders produce identical numbers, and
//! per-point solver failures are recorded in the affected row while the
//! sweep keeps going.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix5};

use crate::array::{steering, Complex64};
use crate::baselines::{
    directional_codebook, random_profiles, DirectionalConfig, RandomProfileConfig,
};
use crate::config::Scenario;
use crate::design::{
    build_beam_basis, lambda_to_weights, solve_lambda_sdp, BeamBasis, DesignContext, SdpSettings,
    SdpSolution, SolverStatus,
};
use crate::error::{Error, Result};
use crate::fim;
use crate::geometry::{cart_to_sph, sph_to_cart, CartesianPoint, SphericalPoint};
use crate::profiles::{allocate_time, project_unit_modulus, ProjectionParams};

/// One benchmarked profile design.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// Unconstrained Hermitian allocation over the orthonormal beams.
    OptimalFull,
    /// Diagonal allocation over the orthonormal beams.
    OptimalDiagonal,
    /// Optimize on the orthonormal basis, then project the beams
    /// (continuous weights on feasible beams).
    PipelineA,
    /// Project the beams first, then re-optimize the weights on them.
    PipelineB,
    /// Integer time sharing of the projected beams at the given budget.
    TimeDivision { total_t: u32 },
    Random { t: u32, quantized: bool },
    Directional { radius: f64, t: u32 },
}

impl DesignSpec {
    /// Stable identifier used in CSV rows (never contains commas).
    pub fn name(&self) -> String {
        match self {
            DesignSpec::OptimalFull => "optimal_full".into(),
            DesignSpec::OptimalDiagonal => "optimal_diag".into(),
            DesignSpec::PipelineA => "pipeline_a".into(),
            DesignSpec::PipelineB => "pipeline_b".into(),
            DesignSpec::TimeDivision { total_t } => format!("timediv_t{total_t}"),
            DesignSpec::Random { t, quantized } => {
                if *quantized {
                    format!("random_q_t{t}")
                } else {
                    format!("random_t{t}")
                }
            }
            DesignSpec::Directional { radius, t } => format!("directional_r{radius}_t{t}"),
        }
    }

    /// Parses one CLI token:
    /// `optimal-full`, `optimal-diag`, `pipeline-a`, `pipeline-b`,
    /// `timediv=T`, `random=T[:q]`, `directional=R[:T]`.
    pub fn parse(token: &str, default_t: u32) -> Result<DesignSpec> {
        let bad = |msg: String| Error::Config {
            field: "designs".into(),
            message: msg,
        };
        let (head, arg) = match token.split_once('=') {
            Some((h, a)) => (h, Some(a)),
            None => (token, None),
        };
        match (head, arg) {
            ("optimal-full" | "optimal", None) => Ok(DesignSpec::OptimalFull),
            ("optimal-diag" | "diag", None) => Ok(DesignSpec::OptimalDiagonal),
            ("pipeline-a", None) => Ok(DesignSpec::PipelineA),
            ("pipeline-b", None) => Ok(DesignSpec::PipelineB),
            ("timediv", Some(a)) => {
                let total_t: u32 = a
                    .parse()
                    .map_err(|_| bad(format!("bad timediv budget `{a}`")))?;
                Ok(DesignSpec::TimeDivision { total_t })
            }
            ("timediv", None) => Ok(DesignSpec::TimeDivision { total_t: default_t }),
            ("random", arg) => {
                let (t, quantized) = match arg {
                    None => (default_t, false),
                    Some(a) => {
                        let (t_str, q) = match a.split_once(':') {
                            Some((t, "q")) => (t, true),
                            Some((_, other)) => {
                                return Err(bad(format!("bad random modifier `{other}`")))
                            }
                            None => (a, false),
                        };
                        (
                            t_str
                                .parse()
                                .map_err(|_| bad(format!("bad random budget `{t_str}`")))?,
                            q,
                        )
                    }
                };
                Ok(DesignSpec::Random { t, quantized })
            }
            ("directional", Some(a)) => {
                let (r_str, t) = match a.split_once(':') {
                    Some((r, t_str)) => (
                        r,
                        t_str
                            .parse()
                            .map_err(|_| bad(format!("bad directional budget `{t_str}`")))?,
                    ),
                    None => (a, default_t),
                };
                let radius: f64 = r_str
                    .parse()
                    .map_err(|_| bad(format!("bad directional radius `{r_str}`")))?;
                Ok(DesignSpec::Directional { radius, t })
            }
            _ => Err(bad(format!("unknown design `{token}`"))),
        }
    }

    /// The benchmark set behind the comparison figures: both optimal
    /// variants, both feasibility pipelines, and the baselines.
    pub fn default_set(t: u32) -> Vec<DesignSpec> {
        vec![
            DesignSpec::OptimalFull,
            DesignSpec::OptimalDiagonal,
            DesignSpec::PipelineA,
            DesignSpec::PipelineB,
            DesignSpec::TimeDivision { total_t: t },
            DesignSpec::Random {
                t,
                quantized: false,
            },
            DesignSpec::Directional { radius: 0.5, t },
            DesignSpec::Directional { radius: 2.0, t },
        ]
    }
}

/// One (distance, design) evaluation.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// Swept coordinate: the UE's y position in meters.
    pub distance_m: f64,
    /// Euclidean RIS-UE range of the same point.
    pub range_m: f64,
    pub design: String,
    pub peb_m: f64,
    pub lambda: [f64; 4],
    pub wall_time_s: f64,
    pub status: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Tuning knobs shared by every design in a sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub projection: ProjectionParams,
    pub sdp: SdpSettings,
}

fn status_name(status: SolverStatus) -> &'static str {
    match status {
        SolverStatus::Optimal => "ok",
        SolverStatus::Inaccurate => "inaccurate",
        SolverStatus::Infeasible => "infeasible",
    }
}

/// Lazily shared work at one sweep point: the orthonormal basis, the
/// diagonal solves, the projected beams, and their per-beam unit FIMs.
struct PointCache<'a> {
    scen: &'a Scenario,
    opts: &'a SweepOptions,
    ctx: DesignContext,
    point_seed: u64,
    basis: Option<BeamBasis>,
    diag_solution: Option<SdpSolution>,
    projected: Option<[DVector<Complex64>; 4]>,
    diag_on_projected: Option<SdpSolution>,
    beam_fims_car: Option<[Matrix5<f64>; 4]>,
}

impl<'a> PointCache<'a> {
    fn new(scen: &'a Scenario, opts: &'a SweepOptions, p_ue: CartesianPoint, point_seed: u64) -> Result<Self> {
        Ok(PointCache {
            scen,
            opts,
            ctx: scen.context_at(&p_ue)?,
            point_seed,
            basis: None,
            diag_solution: None,
            projected: None,
            diag_on_projected: None,
            beam_fims_car: None,
        })
    }

    fn budget(&self) -> f64 {
        self.scen.config().t as f64
    }

    fn basis(&mut self) -> Result<&BeamBasis> {
        if self.basis.is_none() {
            self.basis = Some(build_beam_basis(self.ctx.bundle(), true)?);
        }
        Ok(self.basis.as_ref().unwrap())
    }

    fn diag_solution(&mut self) -> Result<&SdpSolution> {
        if self.diag_solution.is_none() {
            let budget = self.budget();
            let sdp = self.opts.sdp.clone();
            self.basis()?;
            let basis = self.basis.as_ref().unwrap();
            let sol = solve_lambda_sdp(basis, &self.ctx, budget, true, &sdp)?;
            self.diag_solution = Some(sol);
        }
        Ok(self.diag_solution.as_ref().unwrap())
    }

    fn projected(&mut self) -> Result<&[DVector<Complex64>; 4]> {
        if self.projected.is_none() {
            let params = self.opts.projection.clone();
            self.basis()?;
            let basis = self.basis.as_ref().unwrap();
            let mut beams = Vec::with_capacity(4);
            for i in 0..4 {
                beams.push(project_unit_modulus(
                    &basis.column(i),
                    &params,
                    self.ctx.array(),
                    self.ctx.p_ue(),
                )?);
            }
            self.projected = Some(beams.try_into().expect("4 beams"));
        }
        Ok(self.projected.as_ref().unwrap())
    }

    fn diag_on_projected(&mut self) -> Result<&SdpSolution> {
        if self.diag_on_projected.is_none() {
            let budget = self.budget();
            let sdp = self.opts.sdp.clone();
            self.projected()?;
            let beams = self.projected.as_ref().unwrap().clone();
            let basis = BeamBasis::from_unit_modulus_columns(beams)?;
            let sol = solve_lambda_sdp(&basis, &self.ctx, budget, true, &sdp)?;
            self.diag_on_projected = Some(sol);
        }
        Ok(self.diag_on_projected.as_ref().unwrap())
    }

    /// Cartesian FIM of each projected beam for a single transmission.
    fn beam_fims_car(&mut self) -> Result<&[Matrix5<f64>; 4]> {
        if self.beam_fims_car.is_none() {
            self.projected()?;
            let beams = self.projected.as_ref().unwrap();
            let mut fims = Vec::with_capacity(4);
            for beam in beams.iter() {
                let single = DMatrix::from_fn(beam.len(), 1, |r, _| beam[r]);
                let j_sph = fim::fim_from_profiles(
                    self.ctx.bundle(),
                    self.ctx.beta(),
                    &single,
                    self.ctx.snr(),
                )?;
                fims.push(fim::fim_cartesian(&j_sph, self.ctx.jacobian()));
            }
            self.beam_fims_car = Some(fims.try_into().expect("4 fims"));
        }
        Ok(self.beam_fims_car.as_ref().unwrap())
    }

    fn weighted_beam_peb(&mut self, weights: &[f64; 4]) -> Result<f64> {
        let fims = self.beam_fims_car()?;
        let mut j_car = Matrix5::zeros();
        for (f, &w) in fims.iter().zip(weights) {
            j_car += f * w;
        }
        fim::peb(&((j_car + j_car.transpose()) * 0.5))
    }

    fn profiles_peb(&mut self, f: &DMatrix<Complex64>) -> Result<f64> {
        let j_sph =
            fim::fim_from_profiles(self.ctx.bundle(), self.ctx.beta(), f, self.ctx.snr())?;
        let j_car = fim::fim_cartesian(&j_sph, self.ctx.jacobian());
        fim::peb(&j_car)
    }

    fn evaluate(&mut self, spec: &DesignSpec) -> Result<(f64, [f64; 4], &'static str)> {
        match spec {
            DesignSpec::OptimalFull => {
                let budget = self.budget();
                let sdp = self.opts.sdp.clone();
                self.basis()?;
                let basis = self.basis.as_ref().unwrap();
                let sol = solve_lambda_sdp(basis, &self.ctx, budget, false, &sdp)?;
                Ok((
                    sol.peb_at_optimum,
                    sol.allocation.diagonal(),
                    status_name(sol.status),
                ))
            }
            DesignSpec::OptimalDiagonal => {
                let sol = self.diag_solution()?;
                Ok((
                    sol.peb_at_optimum,
                    sol.allocation.diagonal(),
                    status_name(sol.status),
                ))
            }
            DesignSpec::PipelineA => {
                let (lambda, status) = {
                    let sol = self.diag_solution()?;
                    (sol.allocation.diagonal(), sol.status)
                };
                let peb = self.weighted_beam_peb(&lambda)?;
                Ok((peb, lambda, status_name(status)))
            }
            DesignSpec::PipelineB => {
                let sol = self.diag_on_projected()?;
                Ok((
                    sol.peb_at_optimum,
                    sol.allocation.diagonal(),
                    status_name(sol.status),
                ))
            }
            DesignSpec::TimeDivision { total_t } => {
                let (weights, status) = {
                    let sol = self.diag_on_projected()?;
                    (lambda_to_weights(sol)?, sol.status)
                };
                let alloc = allocate_time(&weights, *total_t)?;
                let counts = [
                    alloc[0] as f64,
                    alloc[1] as f64,
                    alloc[2] as f64,
                    alloc[3] as f64,
                ];
                let peb = self.weighted_beam_peb(&counts)?;
                Ok((peb, counts, status_name(status)))
            }
            DesignSpec::Random { t, quantized } => {
                let cfg = RandomProfileConfig {
                    seed: self.point_seed,
                    quantized: *quantized,
                };
                let f = random_profiles(self.ctx.array(), *t, &cfg);
                let peb = self.profiles_peb(&f)?;
                Ok((peb, [0.0; 4], "ok"))
            }
            DesignSpec::Directional { radius, t } => {
                let cfg = DirectionalConfig {
                    radius: *radius,
                    seed: self.point_seed,
                };
                let f = directional_codebook(self.ctx.array(), self.ctx.p_ue(), *t, &cfg)?;
                let peb = self.profiles_peb(&f)?;
                Ok((peb, [0.0; 4], "ok"))
            }
        }
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

/// PEB of every requested design at every distance, the UE placed at
/// `(1, d, 1)` meters.
pub fn run_peb_sweep(
    scen: &Scenario,
    designs: &[DesignSpec],
    distances: &[f64],
    opts: &SweepOptions,
) -> SweepResult {
    let mut rows = Vec::with_capacity(distances.len() * designs.len());
    for (idx, &d) in distances.iter().enumerate() {
        let p_ue = CartesianPoint::new(1.0, d, 1.0);
        let range = p_ue.norm();
        let point_seed = scen.config().seed ^ idx as u64;
        let mut cache = match PointCache::new(scen, opts, p_ue, point_seed) {
            Ok(c) => c,
            Err(e) => {
                // The whole point is unusable; record every design as failed.
                for spec in designs {
                    rows.push(SweepRow {
                        distance_m: d,
                        range_m: range,
                        design: spec.name(),
                        peb_m: f64::INFINITY,
                        lambda: [0.0; 4],
                        wall_time_s: 0.0,
                        status: sanitize(&e.to_string()),
                    });
                }
                continue;
            }
        };
        for spec in designs {
            let start = Instant::now();
            let (peb, lambda, status) = match cache.evaluate(spec) {
                Ok((p, l, s)) => (p, l, s.to_string()),
                Err(e) => (f64::INFINITY, [0.0; 4], sanitize(&e.to_string())),
            };
            rows.push(SweepRow {
                distance_m: d,
                range_m: range,
                design: spec.name(),
                peb_m: peb,
                lambda,
                wall_time_s: start.elapsed().as_secs_f64(),
                status,
            });
        }
    }
    SweepResult { rows }
}

/// Spherical coordinate selected for a beam-gain cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutCoordinate {
    Rho,
    Theta,
    Phi,
}

impl CutCoordinate {
    pub fn label(&self) -> &'static str {
        match self {
            CutCoordinate::Rho => "rho",
            CutCoordinate::Theta => "theta",
            CutCoordinate::Phi => "phi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(CutCoordinate::Rho),
            "theta" => Ok(CutCoordinate::Theta),
            "phi" => Ok(CutCoordinate::Phi),
            _ => Err(Error::Config {
                field: "coordinate".into(),
                message: format!("expected rho|theta|phi, got `{s}`"),
            }),
        }
    }
}

/// Evenly spaced sample grid.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.min];
        }
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// Gains of the four orthonormalized beams at one probe value.
#[derive(Debug, Clone)]
pub struct BeamCutRow {
    pub value: f64,
    /// `|u_i^T a(p)|^2` for the directional beam and the three derivative
    /// beams, in basis order.
    pub gains: [f64; 4],
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct BeamCutsResult {
    pub coordinate: CutCoordinate,
    pub rows: Vec<BeamCutRow>,
}

/// Beam-pattern cut through `p_ue` along one spherical coordinate, the
/// other two held at the UE's values. Grid points that hit a geometric
/// degeneracy are emitted with a `skipped` status instead of aborting.
pub fn run_beam_cuts(
    scen: &Scenario,
    p_ue: &CartesianPoint,
    coordinate: CutCoordinate,
    grid: &GridSpec,
) -> Result<BeamCutsResult> {
    let ctx = scen.context_at(p_ue)?;
    let basis = build_beam_basis(ctx.bundle(), true)?;
    let center = cart_to_sph(p_ue)?;
    let mut rows = Vec::with_capacity(grid.steps);
    for value in grid.values() {
        let probe_sph = match coordinate {
            CutCoordinate::Rho => SphericalPoint::new(value, center.theta, center.phi),
            CutCoordinate::Theta => SphericalPoint::new(center.rho, value, center.phi),
            CutCoordinate::Phi => SphericalPoint::new(center.rho, center.theta, value),
        };
        if matches!(coordinate, CutCoordinate::Rho) && value <= 0.0 {
            rows.push(BeamCutRow {
                value,
                gains: [0.0; 4],
                status: "skipped".into(),
            });
            continue;
        }
        let probe = sph_to_cart(&probe_sph);
        match steering(scen.array(), &probe) {
            Ok(a) => {
                let mut gains = [0.0; 4];
                for (i, g) in gains.iter_mut().enumerate() {
                    let u = basis.matrix().column(i);
                    let corr: Complex64 = u.iter().zip(a.iter()).map(|(ui, ai)| ui * ai).sum();
                    *g = corr.norm_sqr();
                }
                rows.push(BeamCutRow {
                    value,
                    gains,
                    status: "ok".into(),
                });
            }
            Err(Error::DegenerateGeometry(_)) => rows.push(BeamCutRow {
                value,
                gains: [0.0; 4],
                status: "skipped".into(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(BeamCutsResult { coordinate, rows })
}
