//! PEB-minimizing precoder covariance design.
//!
//! The covariance that minimizes the position error bound is spanned by
//! four beams: the steering vector toward the presumed position and its
//! three spherical derivatives. The basis `U` stores their conjugates (the
//! profiles actually applied at the RIS), and with the `X = conj(F) F^T`
//! covariance convention a diagonal weight `lambda_i` on column `u_i` means
//! applying that beam with power `lambda_i`, i.e.
//! `X = conj(U) Lambda U^T`. Contracting with the observation columns via
//! `G = U^T B` turns the bound into a function of a 4x4 Hermitian variable
//! only, so the semidefinite program's solve cost is independent of the
//! array size:
//!
//! ```text
//! minimize    u1 + u2 + u3
//! subject to  [[J_car(Lambda), e_k], [e_k^T, u_k]] >= 0,  k = 1..3
//!             tr(Lambda) = budget
//!             Lambda >= 0
//! ```
//!
//! The full-X variant keeps the `M x M` variable (guarded to small arrays)
//! and exists to validate the structure numerically. Hermitian unknowns are
//! handled through their real symmetric embedding; inside the LMIs the
//! information matrix is rebalanced between its meter-valued and
//! dimensionless rows, an exact congruence that leaves the position CRB
//! untouched.

use std::time::Instant;

use nalgebra::{Complex, DMatrix, DVector, Matrix4, Matrix5, SymmetricEigen};

use crate::array::{steering_derivatives, Complex64, RisArray, SteeringBundle};
use crate::error::{Error, Result};
use crate::fim::{
    self, observation_basis, ChannelGain, FimResult, PrecoderCovariance, SnrScale,
};
use crate::geometry::{jacobian, CartesianPoint, JacobianMatrix};
use crate::profiles::ProfileSchedule;
use crate::sdp::{ConicProgram, LinearMatrixInequality, SparseSymMat};

pub use crate::sdp::SolverStatus;

/// Conic solver knobs.
#[derive(Debug, Clone)]
pub struct SdpSettings {
    /// Gap and feasibility tolerance handed to the interior-point solver.
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

/// Everything a design evaluation needs about one scenario point: the
/// array, the UE position with its steering bundle and Jacobian, the
/// channel gain, and the SNR scale.
#[derive(Debug, Clone)]
pub struct DesignContext {
    array: RisArray,
    p_ue: CartesianPoint,
    bundle: SteeringBundle,
    beta: ChannelGain,
    snr: SnrScale,
    jacobian: JacobianMatrix,
}

impl DesignContext {
    pub fn new(
        array: RisArray,
        p_ue: CartesianPoint,
        beta: ChannelGain,
        snr: SnrScale,
    ) -> Result<Self> {
        let bundle = steering_derivatives(&array, &p_ue)?;
        let jac = jacobian(&p_ue)?;
        Ok(DesignContext {
            array,
            p_ue,
            bundle,
            beta,
            snr,
            jacobian: jac,
        })
    }

    pub fn array(&self) -> &RisArray {
        &self.array
    }

    pub fn p_ue(&self) -> &CartesianPoint {
        &self.p_ue
    }

    pub fn bundle(&self) -> &SteeringBundle {
        &self.bundle
    }

    pub fn beta(&self) -> ChannelGain {
        self.beta
    }

    pub fn snr(&self) -> SnrScale {
        self.snr
    }

    pub fn jacobian(&self) -> &JacobianMatrix {
        &self.jacobian
    }

    pub fn evaluate_covariance(&self, x: &PrecoderCovariance) -> Result<FimResult> {
        fim::evaluate(&self.bundle, self.beta, x, self.snr, &self.jacobian)
    }

    pub fn evaluate_schedule(&self, schedule: &ProfileSchedule) -> Result<FimResult> {
        fim::fim_from_schedule(schedule, &self.bundle, self.beta, self.snr, &self.jacobian)
    }
}

/// Four-column beam basis: conjugated steering vector plus the conjugated
/// derivative beams, optionally orthonormalized so that `U^H U = M I_4`.
#[derive(Debug, Clone)]
pub struct BeamBasis {
    u: DMatrix<Complex64>,
    orthonormalized: bool,
}

impl BeamBasis {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn is_orthonormalized(&self) -> bool {
        self.orthonormalized
    }

    pub fn column(&self, i: usize) -> DVector<Complex64> {
        self.u.column(i).into_owned()
    }

    pub fn elements(&self) -> usize {
        self.u.nrows()
    }

    /// Basis of explicit unit-modulus beams (e.g. projected ones). Each
    /// column then has squared norm exactly `M`, which keeps the trace
    /// bookkeeping of the reduced program intact without orthonormality.
    pub fn from_unit_modulus_columns(cols: [DVector<Complex64>; 4]) -> Result<Self> {
        let m = cols[0].len();
        for (i, c) in cols.iter().enumerate() {
            if c.len() != m {
                return Err(Error::Shape(format!(
                    "column {i} has {} entries, expected {m}",
                    c.len()
                )));
            }
            for (e, v) in c.iter().enumerate() {
                if (v.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidBeam(format!(
                        "column {i} entry {e} has modulus {}",
                        v.norm()
                    )));
                }
            }
        }
        let mut u = DMatrix::from_element(m, 4, Complex::new(0.0, 0.0));
        for (i, c) in cols.iter().enumerate() {
            u.set_column(i, c);
        }
        Ok(BeamBasis {
            u,
            orthonormalized: false,
        })
    }
}

/// Builds the beam basis at the bundle's position, columns ordered
/// (steering, range, azimuth, elevation), all conjugated. With
/// `orthonormalize` a twice-through modified Gram-Schmidt runs and every
/// column is rescaled to squared norm `M`.
pub fn build_beam_basis(bundle: &SteeringBundle, orthonormalize: bool) -> Result<BeamBasis> {
    let m = bundle.len();
    let cols = [
        bundle.a.map(|v| v.conj()),
        bundle.d_rho.map(|v| v.conj()),
        bundle.d_theta.map(|v| v.conj()),
        bundle.d_phi.map(|v| v.conj()),
    ];
    if !orthonormalize {
        let mut u = DMatrix::from_element(m, 4, Complex::new(0.0, 0.0));
        for (i, c) in cols.iter().enumerate() {
            u.set_column(i, c);
        }
        return Ok(BeamBasis {
            u,
            orthonormalized: false,
        });
    }

    let mut q: Vec<DVector<Complex64>> = Vec::with_capacity(4);
    for (j, col) in cols.iter().enumerate() {
        let orig = col.norm();
        if orig == 0.0 {
            return Err(Error::BasisDegenerate(format!("column {j} is zero")));
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for qk in &q {
                let proj = qk.dotc(&v);
                v -= qk * proj;
            }
        }
        let res = v.norm();
        if res < 1e-8 * orig {
            return Err(Error::BasisDegenerate(format!(
                "column {j} is colinear with earlier columns (residual {res:e} vs norm {orig:e})"
            )));
        }
        q.push(v / Complex::new(res, 0.0));
    }
    let scale = Complex::new((m as f64).sqrt(), 0.0);
    let mut u = DMatrix::from_element(m, 4, Complex::new(0.0, 0.0));
    for (i, qi) in q.iter().enumerate() {
        u.set_column(i, &(qi * scale));
    }
    Ok(BeamBasis {
        u,
        orthonormalized: true,
    })
}

/// Beam-power allocation over the basis columns.
#[derive(Debug, Clone)]
pub struct LambdaAllocation {
    lambda: Matrix4<Complex64>,
    diagonal_only: bool,
    budget: f64,
}

impl LambdaAllocation {
    /// Cleans a solver iterate: Hermitian part, negative eigenvalues
    /// clamped, trace renormalized to the budget.
    pub(crate) fn from_solver(
        raw: Matrix4<Complex64>,
        diagonal_only: bool,
        budget: f64,
    ) -> Self {
        let herm = (raw + raw.adjoint()) * Complex::new(0.5, 0.0);
        let mut lambda = if diagonal_only {
            Matrix4::from_diagonal(&nalgebra::Vector4::new(
                Complex::new(herm[(0, 0)].re.max(0.0), 0.0),
                Complex::new(herm[(1, 1)].re.max(0.0), 0.0),
                Complex::new(herm[(2, 2)].re.max(0.0), 0.0),
                Complex::new(herm[(3, 3)].re.max(0.0), 0.0),
            ))
        } else {
            let eig = SymmetricEigen::new(herm);
            let mut rebuilt = Matrix4::from_element(Complex::new(0.0, 0.0));
            for i in 0..4 {
                let l = eig.eigenvalues[i].max(0.0);
                let v = eig.eigenvectors.column(i);
                rebuilt += (v * v.adjoint()) * Complex::new(l, 0.0);
            }
            rebuilt
        };
        let trace: f64 = (0..4).map(|i| lambda[(i, i)].re).sum();
        if trace > 0.0 && budget > 0.0 {
            lambda *= Complex::new(budget / trace, 0.0);
        } else {
            lambda = Matrix4::from_diagonal_element(Complex::new(budget / 4.0, 0.0));
        }
        LambdaAllocation {
            lambda,
            diagonal_only,
            budget,
        }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.lambda
    }

    pub fn diagonal(&self) -> [f64; 4] {
        [
            self.lambda[(0, 0)].re,
            self.lambda[(1, 1)].re,
            self.lambda[(2, 2)].re,
            self.lambda[(3, 3)].re,
        ]
    }

    pub fn is_diagonal_only(&self) -> bool {
        self.diagonal_only
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.lambda[(i, i)].re).sum()
    }
}

/// Outcome of the reduced allocation program.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub allocation: LambdaAllocation,
    /// Sum of the three position CRB diagonal bounds (m^2).
    pub objective: f64,
    /// PEB recomputed from the cleaned allocation (m).
    pub peb_at_optimum: f64,
    pub status: SolverStatus,
    /// Time spent inside the interior-point solver.
    pub solve_seconds: f64,
    /// Time spent building images and program data.
    pub assembly_seconds: f64,
}

/// Outcome of the full-covariance validation program.
#[derive(Debug, Clone)]
pub struct FullXSolution {
    pub x: PrecoderCovariance,
    pub objective: f64,
    pub status: SolverStatus,
    pub solve_seconds: f64,
}

/// Real parameters of a Hermitian matrix: diagonal entries, then real and
/// imaginary parts of each strict upper-triangle entry.
#[derive(Debug, Clone, Copy)]
enum HermParam {
    Diag(usize),
    OffRe(usize, usize),
    OffIm(usize, usize),
}

fn herm_params(dim: usize, diagonal_only: bool) -> Vec<HermParam> {
    let mut out: Vec<HermParam> = (0..dim).map(HermParam::Diag).collect();
    if !diagonal_only {
        for p in 0..dim {
            for q in (p + 1)..dim {
                out.push(HermParam::OffRe(p, q));
                out.push(HermParam::OffIm(p, q));
            }
        }
    }
    out
}

fn herm_from_params(dim: usize, params: &[HermParam], y: &[f64]) -> DMatrix<Complex64> {
    let mut h = DMatrix::from_element(dim, dim, Complex::new(0.0, 0.0));
    for (param, &v) in params.iter().zip(y) {
        match *param {
            HermParam::Diag(p) => h[(p, p)] += Complex::new(v, 0.0),
            HermParam::OffRe(p, q) => {
                h[(p, q)] += Complex::new(v, 0.0);
                h[(q, p)] += Complex::new(v, 0.0);
            }
            HermParam::OffIm(p, q) => {
                h[(p, q)] += Complex::new(0.0, v);
                h[(q, p)] += Complex::new(0.0, -v);
            }
        }
    }
    h
}

/// Spherical FIM image `Re{G^H H G}` of one Hermitian parameter, where the
/// rows of `G` are what the parameter couples.
fn sph_image(g: &DMatrix<Complex64>, param: HermParam) -> Matrix5<f64> {
    let outer = |p: usize, q: usize| -> DMatrix<Complex64> {
        let gp = g.row(p);
        let gq = g.row(q);
        gp.adjoint() * gq
    };
    let mut out = Matrix5::zeros();
    match param {
        HermParam::Diag(p) => {
            let m = outer(p, p);
            for i in 0..5 {
                for k in 0..5 {
                    out[(i, k)] = m[(i, k)].re;
                }
            }
        }
        HermParam::OffRe(p, q) => {
            let m = outer(p, q);
            for i in 0..5 {
                for k in 0..5 {
                    out[(i, k)] = m[(i, k)].re + m[(k, i)].re;
                }
            }
        }
        HermParam::OffIm(p, q) => {
            let m = outer(p, q);
            for i in 0..5 {
                for k in 0..5 {
                    out[(i, k)] = -m[(i, k)].im - m[(k, i)].im;
                }
            }
        }
    }
    (out + out.transpose()) * 0.5
}

/// Real-embedding coefficient of one Hermitian parameter: the symmetric
/// `2 dim x 2 dim` image of `[[Re, -Im], [Im, Re]]`.
fn embedding_coeff(dim: usize, param: HermParam) -> SparseSymMat {
    let mut m = SparseSymMat::zeros(2 * dim);
    match param {
        HermParam::Diag(p) => {
            m.push(p, p, 1.0);
            m.push(dim + p, dim + p, 1.0);
        }
        HermParam::OffRe(p, q) => {
            m.push(p, q, 1.0);
            m.push(dim + p, dim + q, 1.0);
        }
        HermParam::OffIm(p, q) => {
            m.push(p, dim + q, -1.0);
            m.push(q, dim + p, 1.0);
        }
    }
    m
}

/// Best-effort position CRB estimate used only to scale the bound
/// variables. Unlike the production bound it never gives up on poor
/// conditioning; eigenvalues are floored instead.
fn reference_crb(j: &Matrix5<f64>) -> [f64; 3] {
    let mut d = [0.0_f64; 5];
    for i in 0..5 {
        let jii = j[(i, i)];
        if !(jii > 0.0 && jii.is_finite()) {
            return [1.0; 3];
        }
        d[i] = 1.0 / jii.sqrt();
    }
    let mut scaled = Matrix5::zeros();
    for i in 0..5 {
        for k in 0..5 {
            scaled[(i, k)] = j[(i, k)] * d[i] * d[k];
        }
    }
    scaled = (scaled + scaled.transpose()) * 0.5;
    let eig = SymmetricEigen::new(scaled);
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    if !(max_eig > 0.0 && max_eig.is_finite()) {
        return [1.0; 3];
    }
    // Just above eigensolver noise; biasing the estimate upward is benign
    // (the bound variable lands below 1), underestimating is not.
    let floor = max_eig * 1e-15;
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut inv_kk = 0.0;
        for i in 0..5 {
            let v = eig.eigenvectors[(k, i)];
            inv_kk += v * v / eig.eigenvalues[i].max(floor);
        }
        out[k] = inv_kk * d[k] * d[k];
    }
    out
}

/// Diagonal rebalancing between the meter-valued position rows and the
/// dimensionless gain rows, plus a global magnitude divisor. Both are exact
/// congruences/scalings of the program that leave the position CRBs (and so
/// the objective, once undone) unchanged.
fn lmi_scaling(j_ref: &Matrix5<f64>) -> ([f64; 5], f64) {
    let pos = (j_ref[(0, 0)] + j_ref[(1, 1)] + j_ref[(2, 2)]) / 3.0;
    let gain = (j_ref[(3, 3)] + j_ref[(4, 4)]) / 2.0;
    let s_b = if pos > 0.0 && gain > 0.0 && pos.is_finite() && gain.is_finite() {
        (pos / gain).sqrt()
    } else {
        1.0
    };
    let scale = [1.0, 1.0, 1.0, s_b, s_b];
    let mut c = 0.0;
    for (i, s) in scale.iter().enumerate() {
        c += j_ref[(i, i)] * s * s;
    }
    c /= 5.0;
    if !(c > 0.0 && c.is_finite()) {
        c = 1.0;
    }
    (scale, c)
}

fn scaled_block(j: &Matrix5<f64>, scale: &[f64; 5], divisor: f64) -> SparseSymMat {
    let mut m = SparseSymMat::zeros(6);
    for i in 0..5 {
        for k in i..5 {
            m.push(i, k, j[(i, k)] * scale[i] * scale[k] / divisor);
        }
    }
    m
}

struct AssembledSdp {
    program: ConicProgram,
    params: Vec<HermParam>,
    raw_images: Vec<Matrix5<f64>>,
}

/// Shared LMI assembly for both the reduced and the full program. `g` holds
/// the rows the Hermitian variable couples (`U^T B` or `B` itself),
/// `trace_target` the equality right-hand side.
///
/// Each Schur block is congruence-scaled so that its entries are O(1) near
/// the optimum: the information matrix is divided by the reference
/// magnitude `c`, and the bound variable for coordinate `k` is substituted
/// as `w_k = u_k / t_k` with `t_k = c * CRB_k(reference)`, which puts the
/// cross entry at `1/sqrt(t_k)` and the objective coefficient at `t_k / c`.
/// Without this the large raw `u_k` dominates the block norm and absolute
/// Schur violations hide below the solver's relative feasibility metric.
/// The solver objective then reads directly in m^2.
fn assemble(
    g: &DMatrix<Complex64>,
    dim: usize,
    diagonal_only: bool,
    gain: f64,
    jac: &JacobianMatrix,
    trace_target: f64,
    reference_weight: f64,
) -> AssembledSdp {
    let params = herm_params(dim, diagonal_only);
    let n_params = params.len();
    let n_vars = n_params + 3;

    let mut raw_images = Vec::with_capacity(n_params);
    let mut j_ref = Matrix5::zeros();
    for param in &params {
        let img = fim::fim_cartesian(&(sph_image(g, *param) * gain), jac);
        if let HermParam::Diag(_) = param {
            j_ref += img * reference_weight;
        }
        raw_images.push(img);
    }
    let (scale, magnitude) = lmi_scaling(&j_ref);
    let crb_ref = reference_crb(&j_ref);
    let t: [f64; 3] = std::array::from_fn(|k| {
        if crb_ref[k] > 0.0 && crb_ref[k].is_finite() {
            magnitude * crb_ref[k]
        } else {
            magnitude
        }
    });

    let mut program = ConicProgram::new(n_vars);
    for k in 0..3 {
        program.set_objective_term(n_params + k, t[k] / magnitude);
    }

    let trace_terms: Vec<(usize, f64)> = params
        .iter()
        .enumerate()
        .filter_map(|(i, p)| match p {
            HermParam::Diag(_) => Some((i, 1.0)),
            _ => None,
        })
        .collect();
    program.add_equality(trace_terms, trace_target);

    for k in 0..3 {
        let mut constant = SparseSymMat::zeros(6);
        constant.push(k, 5, 1.0 / t[k].sqrt());
        let mut coeffs: Vec<(usize, SparseSymMat)> = Vec::with_capacity(n_params + 1);
        for (i, img) in raw_images.iter().enumerate() {
            coeffs.push((i, scaled_block(img, &scale, magnitude)));
        }
        let mut u_coeff = SparseSymMat::zeros(6);
        u_coeff.push(5, 5, 1.0);
        coeffs.push((n_params + k, u_coeff));
        program.add_lmi(LinearMatrixInequality {
            dim: 6,
            constant,
            coeffs,
        });
    }

    if diagonal_only {
        for i in 0..n_params {
            program.add_nonneg_var(i);
        }
    } else {
        let coeffs: Vec<(usize, SparseSymMat)> = params
            .iter()
            .enumerate()
            .map(|(i, p)| (i, embedding_coeff(dim, *p)))
            .collect();
        program.add_lmi(LinearMatrixInequality {
            dim: 2 * dim,
            constant: SparseSymMat::zeros(2 * dim),
            coeffs,
        });
    }

    AssembledSdp {
        program,
        params,
        raw_images,
    }
}

/// Solves the reduced allocation program over the basis columns.
///
/// `budget` is the trace target for `Lambda`; with the published convention
/// `tr(X) = M T` and columns of squared norm `M` that means `budget = T`.
/// Solving with `budget = 1` yields relative beam frequencies instead.
pub fn solve_lambda_sdp(
    basis: &BeamBasis,
    ctx: &DesignContext,
    budget: f64,
    diagonal_only: bool,
    settings: &SdpSettings,
) -> Result<SdpSolution> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Shape(format!("budget must be > 0, got {budget}")));
    }
    if basis.elements() != ctx.bundle().len() {
        return Err(Error::Shape(format!(
            "basis has {} rows but the array has {} elements",
            basis.elements(),
            ctx.bundle().len()
        )));
    }
    let assembly_start = Instant::now();
    let b = observation_basis(ctx.bundle(), ctx.beta());
    // X = conj(U) Lambda U^T, so B^H X B = G^H Lambda G with G = U^T B.
    let g = basis.matrix().transpose() * &b;
    let assembled = assemble(
        &g,
        4,
        diagonal_only,
        ctx.snr().fim_gain(),
        ctx.jacobian(),
        budget,
        budget / 4.0,
    );
    let assembly_seconds = assembly_start.elapsed().as_secs_f64();

    let sol = assembled
        .program
        .solve(settings.tolerance, settings.max_iterations)?;
    let n_params = assembled.params.len();
    let y = &sol.variables[..n_params];

    let lambda_dyn = herm_from_params(4, &assembled.params, y);
    let lambda = Matrix4::from_fn(|i, j| lambda_dyn[(i, j)]);
    let allocation = LambdaAllocation::from_solver(lambda, diagonal_only, budget);

    let mut j_car = Matrix5::zeros();
    for (img, &yi) in assembled.raw_images.iter().zip(y) {
        j_car += img * yi;
    }
    let peb_at_optimum = fim::peb(&((j_car + j_car.transpose()) * 0.5))?;

    Ok(SdpSolution {
        allocation,
        objective: sol.objective,
        peb_at_optimum,
        status: sol.status,
        solve_seconds: sol.solve_seconds,
        assembly_seconds,
    })
}

/// Maximum array size the dense full-covariance program accepts.
pub const FULL_X_MAX_ELEMENTS: usize = 64;

/// Solves the PEB program over the full `M x M` Hermitian covariance with
/// `tr(X) = M * budget`. Validation path for small arrays.
pub fn solve_full_x_sdp(
    ctx: &DesignContext,
    budget: f64,
    settings: &SdpSettings,
) -> Result<FullXSolution> {
    let m = ctx.array().len();
    if m > FULL_X_MAX_ELEMENTS {
        return Err(Error::Capacity(format!(
            "full covariance program supports up to {FULL_X_MAX_ELEMENTS} elements, got {m}"
        )));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Shape(format!("budget must be > 0, got {budget}")));
    }
    let b = observation_basis(ctx.bundle(), ctx.beta());
    let assembled = assemble(
        &b,
        m,
        false,
        ctx.snr().fim_gain(),
        ctx.jacobian(),
        m as f64 * budget,
        budget,
    );

    let sol = assembled
        .program
        .solve(settings.tolerance, settings.max_iterations)?;
    let n_params = assembled.params.len();
    let y = &sol.variables[..n_params];

    let raw = herm_from_params(m, &assembled.params, y);
    // Clamp solver noise off the PSD boundary before validating.
    let herm = (raw.clone() + raw.adjoint()) * Complex::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut x = DMatrix::from_element(m, m, Complex::new(0.0, 0.0));
    for i in 0..m {
        let l = eig.eigenvalues[i].max(0.0);
        if l > 0.0 {
            let v = eig.eigenvectors.column(i);
            x += (v * v.adjoint()) * Complex::new(l, 0.0);
        }
    }
    let x = PrecoderCovariance::new(x)?;

    Ok(FullXSolution {
        x,
        objective: sol.objective,
        status: sol.status,
        solve_seconds: sol.solve_seconds,
    })
}

/// Evaluates the bound for an explicit allocation over a basis without ever
/// forming the `M x M` covariance.
pub fn evaluate_allocation(
    basis: &BeamBasis,
    ctx: &DesignContext,
    lambda: &Matrix4<Complex64>,
) -> Result<FimResult> {
    if basis.elements() != ctx.bundle().len() {
        return Err(Error::Shape(format!(
            "basis has {} rows but the array has {} elements",
            basis.elements(),
            ctx.bundle().len()
        )));
    }
    let b = observation_basis(ctx.bundle(), ctx.beta());
    let g = basis.matrix().transpose() * &b;
    let core = g.adjoint() * lambda * &g;
    let mut j_sph = Matrix5::zeros();
    for i in 0..5 {
        for k in 0..5 {
            j_sph[(i, k)] = 0.5 * (core[(i, k)].re + core[(k, i)].re);
        }
    }
    j_sph *= ctx.snr().fim_gain();
    let j_car = fim::fim_cartesian(&j_sph, ctx.jacobian());
    let peb = fim::peb(&j_car)?;
    Ok(FimResult { j_sph, j_car, peb })
}

/// Relative beam frequencies of a diagonal allocation.
pub fn lambda_to_weights(sol: &SdpSolution) -> Result<[f64; 4]> {
    if !sol.allocation.is_diagonal_only() {
        return Err(Error::Schedule(
            "weights require a diagonal allocation".into(),
        ));
    }
    let diag = sol.allocation.diagonal();
    let total: f64 = diag.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Solver("allocation has zero trace".into()));
    }
    Ok([
        diag[0] / total,
        diag[1] / total,
        diag[2] / total,
        diag[3] / total,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::build_planar_ris;
    use approx::assert_relative_eq;

    fn context(rows: usize, cols: usize) -> DesignContext {
        let lambda = 0.0107;
        let arr = build_planar_ris(rows, cols, lambda / 2.0, lambda).unwrap();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        // Free-space-ish cascaded gain at this range.
        let beta = ChannelGain::new(4.2e-8, 0.0);
        let snr = SnrScale::new(8.33e-7, 2.51e-20).unwrap();
        DesignContext::new(arr, p, beta, snr).unwrap()
    }

    #[test]
    fn orthonormalized_basis_contract() {
        let ctx = context(8, 8);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let m = ctx.array().len() as f64;
        let gram = basis.matrix().adjoint() * basis.matrix();
        let mut dev = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j {
                    Complex::new(m, 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
                dev += (gram[(i, j)] - expect).norm_sqr();
            }
        }
        assert!(dev.sqrt() / (4.0 * m) < 1e-10, "Gram deviation {dev:e}");
    }

    #[test]
    fn first_basis_column_is_conjugate_steering() {
        let ctx = context(4, 4);
        let basis = build_beam_basis(ctx.bundle(), false).unwrap();
        let col = basis.column(0);
        assert_relative_eq!(col.norm_squared(), ctx.array().len() as f64, max_relative = 1e-14);
        for m in 0..ctx.array().len() {
            let expect = ctx.bundle().a[m].conj();
            assert!((col[m] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn derivative_beams_null_at_target() {
        let ctx = context(16, 16);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let m = ctx.array().len() as f64;
        for i in 1..4 {
            let u = basis.column(i);
            let corr: Complex64 = u
                .iter()
                .zip(ctx.bundle().a.iter())
                .map(|(ui, ai)| ui * ai)
                .sum();
            assert!(
                corr.norm() < 1e-9 * m,
                "beam {i} correlation at target: {}",
                corr.norm()
            );
        }
    }

    #[test]
    fn single_element_basis_is_degenerate() {
        let lambda = 0.0107;
        let arr = build_planar_ris(1, 1, lambda / 2.0, lambda).unwrap();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        let bundle = steering_derivatives(&arr, &p).unwrap();
        assert!(matches!(
            build_beam_basis(&bundle, true),
            Err(Error::BasisDegenerate(_))
        ));
    }

    #[test]
    fn budget_homogeneity() {
        let ctx = context(8, 8);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let settings = SdpSettings::default();
        let s1 = solve_lambda_sdp(&basis, &ctx, 10.0, false, &settings).unwrap();
        let s2 = solve_lambda_sdp(&basis, &ctx, 20.0, false, &settings).unwrap();
        assert_eq!(s1.status, SolverStatus::Optimal);
        assert_eq!(s2.status, SolverStatus::Optimal);
        assert_relative_eq!(s2.objective, s1.objective / 2.0, max_relative = 1e-6);
        assert_relative_eq!(
            s2.peb_at_optimum,
            s1.peb_at_optimum / 2.0_f64.sqrt(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn allocation_satisfies_feasibility_invariants() {
        let ctx = context(8, 8);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let sol = solve_lambda_sdp(&basis, &ctx, 40.0, false, &SdpSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        let alloc = &sol.allocation;
        assert_relative_eq!(alloc.trace(), 40.0, max_relative = 1e-6);
        let eig = SymmetricEigen::new(*alloc.matrix());
        for i in 0..4 {
            assert!(eig.eigenvalues[i] >= -1e-9 * alloc.trace());
        }
        // Schur correctness: objective equals the position CRB sum.
        let fr = evaluate_allocation(&basis, &ctx, alloc.matrix()).unwrap();
        assert!(
            (sol.peb_at_optimum - fr.peb).abs() / fr.peb < 1e-6,
            "peb mismatch: {} vs {}",
            sol.peb_at_optimum,
            fr.peb
        );
        assert_relative_eq!(sol.objective, fr.peb * fr.peb, max_relative = 1e-5);
    }

    #[test]
    fn optimal_beats_random_feasible_allocations() {
        let ctx = context(8, 8);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let budget = 40.0;
        let sol =
            solve_lambda_sdp(&basis, &ctx, budget, true, &SdpSettings::default()).unwrap();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut w = [0.0; 4];
            let mut total = 0.0;
            for v in w.iter_mut() {
                *v = rng.random_range(0.01..1.0);
                total += *v;
            }
            let lambda = Matrix4::from_diagonal(&nalgebra::Vector4::new(
                Complex::new(w[0] / total * budget, 0.0),
                Complex::new(w[1] / total * budget, 0.0),
                Complex::new(w[2] / total * budget, 0.0),
                Complex::new(w[3] / total * budget, 0.0),
            ));
            let fr = evaluate_allocation(&basis, &ctx, &lambda).unwrap();
            let feasible_obj = fr.peb * fr.peb;
            assert!(
                sol.objective <= feasible_obj * (1.0 + 1e-6),
                "optimal {} beat by random {}",
                sol.objective,
                feasible_obj
            );
        }
    }

    #[test]
    fn reduced_and_full_programs_agree_on_tiny_array() {
        let ctx = context(2, 2);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let settings = SdpSettings::default();
        let reduced = solve_lambda_sdp(&basis, &ctx, 4.0, false, &settings).unwrap();
        let full = solve_full_x_sdp(&ctx, 4.0, &settings).unwrap();
        assert_eq!(reduced.status, SolverStatus::Optimal);
        assert_eq!(full.status, SolverStatus::Optimal);
        let rel = (reduced.objective - full.objective).abs() / full.objective;
        assert!(rel < 1e-2, "objectives differ by {rel}: {} vs {}", reduced.objective, full.objective);
    }

    #[test]
    fn full_x_guard_rejects_large_arrays() {
        let ctx = context(16, 16);
        assert!(matches!(
            solve_full_x_sdp(&ctx, 4.0, &SdpSettings::default()),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn weights_from_diagonal_allocation() {
        let lambda = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            Complex::new(20.0, 0.0),
            Complex::new(12.0, 0.0),
            Complex::new(6.0, 0.0),
            Complex::new(2.0, 0.0),
        ));
        let sol = SdpSolution {
            allocation: LambdaAllocation {
                lambda,
                diagonal_only: true,
                budget: 40.0,
            },
            objective: 1.0,
            peb_at_optimum: 1.0,
            status: SolverStatus::Optimal,
            solve_seconds: 0.0,
            assembly_seconds: 0.0,
        };
        let w = lambda_to_weights(&sol).unwrap();
        assert_eq!(w, [0.5, 0.3, 0.15, 0.05]);

        let single = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
        ));
        let sol = SdpSolution {
            allocation: LambdaAllocation {
                lambda: single,
                diagonal_only: true,
                budget: 1.0,
            },
            ..sol
        };
        assert_eq!(lambda_to_weights(&sol).unwrap(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_reject_full_allocation() {
        let sol = SdpSolution {
            allocation: LambdaAllocation {
                lambda: Matrix4::from_diagonal_element(Complex::new(1.0, 0.0)),
                diagonal_only: false,
                budget: 4.0,
            },
            objective: 1.0,
            peb_at_optimum: 1.0,
            status: SolverStatus::Optimal,
            solve_seconds: 0.0,
            assembly_seconds: 0.0,
        };
        assert!(lambda_to_weights(&sol).is_err());
    }

    #[test]
    fn allocation_evaluation_matches_explicit_covariance() {
        let ctx = context(4, 4);
        let basis = build_beam_basis(ctx.bundle(), true).unwrap();
        let lambda = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            Complex::new(12.0, 0.0),
            Complex::new(20.0, 0.0),
            Complex::new(5.0, 0.0),
            Complex::new(3.0, 0.0),
        ));
        let via_basis = evaluate_allocation(&basis, &ctx, &lambda).unwrap();

        // Applied beams are the basis columns, so X = conj(U) Lambda U^T.
        let u_conj = basis.matrix().map(|v| v.conj());
        let x = &u_conj * DMatrix::from_fn(4, 4, |i, j| lambda[(i, j)]) * u_conj.adjoint();
        let via_x = ctx
            .evaluate_covariance(&PrecoderCovariance::new(x).unwrap())
            .unwrap();
        let rel = (via_basis.j_sph - via_x.j_sph).norm() / via_x.j_sph.norm();
        assert!(rel < 1e-10, "deviation {rel}");
        assert_relative_eq!(via_basis.peb, via_x.peb, max_relative = 1e-9);
    }
}
