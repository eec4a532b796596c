//! Fisher information and the position error bound.
//!
//! The observation over `T` transmissions is `y = sqrt(Es) beta F^T a(p) + n`
//! with unknowns `(rho, theta, phi, beta_r, beta_i)`. Stacking the scaled
//! derivative columns
//!
//! ```text
//! B = [beta a_rho', beta a_theta', beta a_phi', a, j a]   (M x 5)
//! ```
//!
//! the spherical information matrix is `J = (2 Es / N0) Re{ B^H X B }` with
//! `X = conj(F) F^T`, so `J` is linear in the precoder covariance `X` and
//! never needs the individual profiles once `X` is known. The Cartesian
//! matrix follows by the congruence `C^T J C` with the geometry Jacobian,
//! and the PEB is the root-trace of the position block of its inverse.

use nalgebra::{Complex, DMatrix, DVector, Matrix5, SymmetricEigen};

use crate::array::{Complex64, SteeringBundle};
use crate::error::{Error, Result};
use crate::geometry::JacobianMatrix;
use crate::profiles::ProfileSchedule;

/// Complex channel gain `beta = beta_r + j beta_i` of the reflected path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGain {
    pub re: f64,
    pub im: f64,
}

impl ChannelGain {
    pub fn new(re: f64, im: f64) -> Self {
        ChannelGain { re, im }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex::new(self.re, self.im)
    }

    pub fn abs(&self) -> f64 {
        self.as_complex().norm()
    }
}

/// Transmit symbol energy and effective noise power spectral density (noise
/// figure already folded in), both linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrScale {
    es: f64,
    n0: f64,
}

impl SnrScale {
    pub fn new(es: f64, n0: f64) -> Result<Self> {
        if !(es > 0.0 && es.is_finite()) {
            return Err(Error::Shape(format!("symbol energy must be > 0, got {es}")));
        }
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::Shape(format!("noise PSD must be > 0, got {n0}")));
        }
        Ok(SnrScale { es, n0 })
    }

    pub fn es(&self) -> f64 {
        self.es
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// The `2 Es / N0` prefactor of the information matrix.
    pub fn fim_gain(&self) -> f64 {
        2.0 * self.es / self.n0
    }
}

/// Hermitian PSD precoder covariance `X = conj(F) F^T`.
#[derive(Debug, Clone)]
pub struct PrecoderCovariance {
    x: DMatrix<Complex64>,
}

impl PrecoderCovariance {
    /// Wraps an explicit matrix, checking Hermitian symmetry and positive
    /// semidefiniteness (within `-1e-9 * trace`).
    pub fn new(x: DMatrix<Complex64>) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(Error::Shape(format!(
                "covariance must be square, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let scale = x.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
        for i in 0..x.nrows() {
            for j in i..x.ncols() {
                let asym = (x[(i, j)] - x[(j, i)].conj()).norm();
                if asym > 1e-12 * scale.max(1.0) {
                    return Err(Error::Shape(format!(
                        "covariance is not Hermitian at ({i},{j}): deviation {asym:e}"
                    )));
                }
            }
        }
        let trace: f64 = (0..x.nrows()).map(|i| x[(i, i)].re).sum();
        let eig = SymmetricEigen::new(x.clone());
        let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-9 * trace.abs().max(1.0) {
            return Err(Error::Shape(format!(
                "covariance is not PSD: min eigenvalue {min_eig:e} for trace {trace:e}"
            )));
        }
        Ok(PrecoderCovariance { x })
    }

    /// `X = conj(F) F^T` from an explicit `M x T` profile matrix; PSD by
    /// construction so no spectral check is run.
    pub fn from_profiles(f: &DMatrix<Complex64>) -> Self {
        let x = f.map(|v| v.conj()) * f.transpose();
        PrecoderCovariance { x }
    }

    pub fn zeros(m: usize) -> Self {
        PrecoderCovariance {
            x: DMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.x
    }

    pub fn trace(&self) -> f64 {
        (0..self.x.nrows()).map(|i| self.x[(i, i)].re).sum()
    }
}

/// Spherical and Cartesian information matrices plus the scalar bound.
#[derive(Debug, Clone)]
pub struct FimResult {
    pub j_sph: Matrix5<f64>,
    pub j_car: Matrix5<f64>,
    pub peb: f64,
}

/// Stacks the five derivative columns of the noiseless observation (up to
/// the common `F^T` factor).
pub(crate) fn observation_basis(bundle: &SteeringBundle, beta: ChannelGain) -> DMatrix<Complex64> {
    let m = bundle.len();
    let b = beta.as_complex();
    let i = Complex::new(0.0, 1.0);
    let mut out = DMatrix::from_element(m, 5, Complex::new(0.0, 0.0));
    for row in 0..m {
        out[(row, 0)] = b * bundle.d_rho[row];
        out[(row, 1)] = b * bundle.d_theta[row];
        out[(row, 2)] = b * bundle.d_phi[row];
        out[(row, 3)] = bundle.a[row];
        out[(row, 4)] = i * bundle.a[row];
    }
    out
}

fn real_symmetric_part(g: &DMatrix<Complex64>) -> Matrix5<f64> {
    let mut j = Matrix5::zeros();
    for i in 0..5 {
        for k in 0..5 {
            j[(i, k)] = 0.5 * (g[(i, k)].re + g[(k, i)].re);
        }
    }
    j
}

/// Spherical 5x5 information matrix for a precoder covariance `X`.
pub fn fim_spherical(
    bundle: &SteeringBundle,
    beta: ChannelGain,
    x: &PrecoderCovariance,
    snr: SnrScale,
) -> Result<Matrix5<f64>> {
    if x.dim() != bundle.len() {
        return Err(Error::Shape(format!(
            "covariance is {}x{} but the array has {} elements",
            x.dim(),
            x.dim(),
            bundle.len()
        )));
    }
    let b = observation_basis(bundle, beta);
    let g = b.adjoint() * (x.matrix() * &b);
    Ok(real_symmetric_part(&g) * snr.fim_gain())
}

/// Transforms a spherical information matrix to Cartesian parameters via the
/// congruence `C^T J C`.
pub fn fim_cartesian(j_sph: &Matrix5<f64>, c: &JacobianMatrix) -> Matrix5<f64> {
    let m = c.matrix();
    m.transpose() * j_sph * m
}

/// Spherical FIM of an explicit `M x T` profile matrix, accumulated column
/// by column. Linearity in `X` makes this equal `fim_spherical` with
/// `X = conj(F) F^T` while never materializing the `M x M` matrix.
pub fn fim_from_profiles(
    bundle: &SteeringBundle,
    beta: ChannelGain,
    f: &DMatrix<Complex64>,
    snr: SnrScale,
) -> Result<Matrix5<f64>> {
    if f.nrows() != bundle.len() {
        return Err(Error::Shape(format!(
            "profiles have {} rows but the array has {} elements",
            f.nrows(),
            bundle.len()
        )));
    }
    let b = observation_basis(bundle, beta);
    let d = f.transpose() * b;
    let mut j = Matrix5::zeros();
    for t in 0..d.nrows() {
        for i in 0..5 {
            for k in i..5 {
                let v = (d[(t, i)].conj() * d[(t, k)]).re;
                j[(i, k)] += v;
            }
        }
    }
    for i in 0..5 {
        for k in 0..i {
            j[(i, k)] = j[(k, i)];
        }
    }
    Ok(j * snr.fim_gain())
}

/// Largest relative asymmetry of a square matrix.
fn asymmetry(j: &Matrix5<f64>) -> f64 {
    let scale = j.amax().max(1e-300);
    let mut worst = 0.0_f64;
    for i in 0..5 {
        for k in (i + 1)..5 {
            worst = worst.max((j[(i, k)] - j[(k, i)]).abs() / scale);
        }
    }
    worst
}

const PEB_CONDITION_LIMIT: f64 = 1e12;

/// Per-coordinate position CRBs `[J^-1]_kk`, `k = 1..3`, or `None` when the
/// matrix is singular or effectively singular. Works on the diagonally
/// equilibrated matrix: the raw one mixes meter-valued and dimensionless
/// rows whose scale gap is not a rank deficiency.
pub(crate) fn position_crb_diag(j_car: &Matrix5<f64>) -> Option<[f64; 3]> {
    let mut d = [0.0_f64; 5];
    for i in 0..5 {
        let jii = j_car[(i, i)];
        if !(jii > 0.0 && jii.is_finite()) {
            // A PSD matrix with a non-positive diagonal entry has a zero
            // row/column: no information about that parameter.
            return None;
        }
        d[i] = 1.0 / jii.sqrt();
    }
    let mut scaled = Matrix5::zeros();
    for i in 0..5 {
        for k in 0..5 {
            scaled[(i, k)] = j_car[(i, k)] * d[i] * d[k];
        }
    }
    scaled = (scaled + scaled.transpose()) * 0.5;
    let eig = SymmetricEigen::new(scaled);
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        min_eig = min_eig.min(l);
        max_eig = max_eig.max(l);
    }
    if !(min_eig > 0.0) || max_eig / min_eig > PEB_CONDITION_LIMIT {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut inv_kk = 0.0;
        for i in 0..5 {
            let v = eig.eigenvectors[(k, i)];
            inv_kk += v * v / eig.eigenvalues[i];
        }
        out[k] = inv_kk * d[k] * d[k];
    }
    Some(out)
}

/// Position error bound `sqrt(tr([J^-1]_{1:3,1:3}))` in meters.
///
/// Singular or effectively singular information matrices yield `+inf` rather
/// than an error so that rank-deficient designs (e.g. single-beam schedules)
/// flow through sweeps.
pub fn peb(j_car: &Matrix5<f64>) -> Result<f64> {
    if asymmetry(j_car) > 1e-10 {
        return Err(Error::Shape(
            "information matrix is not symmetric".into(),
        ));
    }
    match position_crb_diag(j_car) {
        Some(crb) => Ok(crb.iter().sum::<f64>().sqrt()),
        None => Ok(f64::INFINITY),
    }
}

/// Full pipeline for one covariance: spherical FIM, Cartesian FIM, PEB.
pub fn evaluate(
    bundle: &SteeringBundle,
    beta: ChannelGain,
    x: &PrecoderCovariance,
    snr: SnrScale,
    c: &JacobianMatrix,
) -> Result<FimResult> {
    let j_sph = fim_spherical(bundle, beta, x, snr)?;
    let j_car = fim_cartesian(&j_sph, c);
    let peb = peb(&j_car)?;
    Ok(FimResult { j_sph, j_car, peb })
}

/// Information of a time-shared schedule: the per-beam rank-one FIMs summed
/// with their integer transmission counts. Equals the `X`-form evaluation
/// with `X = sum_i T_i conj(f_i) f_i^T`.
pub fn fim_from_schedule(
    schedule: &ProfileSchedule,
    bundle: &SteeringBundle,
    beta: ChannelGain,
    snr: SnrScale,
    c: &JacobianMatrix,
) -> Result<FimResult> {
    let m = bundle.len();
    for beam in schedule.beams() {
        if beam.len() != m {
            return Err(Error::Shape(format!(
                "schedule beams have {} entries but the array has {m} elements",
                beam.len()
            )));
        }
    }
    let total: u32 = schedule.allocations().iter().sum();
    if total != schedule.total_transmissions() {
        return Err(Error::Schedule(format!(
            "allocations sum to {total}, expected {}",
            schedule.total_transmissions()
        )));
    }
    let b = observation_basis(bundle, beta);
    let mut j_sph = Matrix5::zeros();
    for (beam, &t_i) in schedule.beams().iter().zip(schedule.allocations()) {
        if t_i == 0 {
            continue;
        }
        // v = B^T f; the rank-one contribution is Re{conj(v) v^T}.
        let v: DVector<Complex64> = b.transpose() * beam;
        let mut j_beam = Matrix5::zeros();
        for i in 0..5 {
            for k in 0..5 {
                j_beam[(i, k)] = (v[i].conj() * v[k]).re;
            }
        }
        j_sph += j_beam * (t_i as f64);
    }
    j_sph *= snr.fim_gain();
    j_sph = (j_sph + j_sph.transpose()) * 0.5;
    let j_car = fim_cartesian(&j_sph, c);
    let peb_val = peb(&j_car)?;
    Ok(FimResult {
        j_sph,
        j_car,
        peb: peb_val,
    })
}
