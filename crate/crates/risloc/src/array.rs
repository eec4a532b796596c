//! RIS element layout, near-field steering vector, and its spherical
//! derivatives.
//!
//! The array lives in the xz plane (`y = 0` for every element) with the
//! phase center at the origin. The steering entry for element `m` and probe
//! position `p` is
//!
//! ```text
//! a_m(p) = exp(-j (2 pi / lambda) (||p - p_m|| - ||p||))
//! ```
//!
//! i.e. the path-length difference relative to the phase center, so every
//! entry is unit modulus and an element sitting exactly at the origin always
//! contributes 1. The derivatives with respect to the probe's spherical
//! coordinates have closed forms of the shape `-j k g a_m` with a real
//! factor `g`; they are what the derivative beams of the optimal design are
//! built from. A finite-difference twin is provided purely as a test oracle.

use nalgebra::{Complex, DVector};

use crate::error::{Error, Result};
use crate::geometry::{cart_to_sph, sph_to_cart, CartesianPoint, SphericalPoint};

pub type Complex64 = Complex<f64>;

/// Planar reflective array: element positions in the xz plane, phase center
/// at the origin, and the carrier wavelength.
#[derive(Debug, Clone)]
pub struct RisArray {
    elements: Vec<CartesianPoint>,
    wavelength: f64,
}

impl RisArray {
    /// Builds an array from explicit element positions. Elements must be
    /// finite points in the `y = 0` plane and the wavelength positive.
    pub fn new(elements: Vec<CartesianPoint>, wavelength: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Shape("array needs at least one element".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Shape(format!("invalid wavelength {wavelength}")));
        }
        for (m, e) in elements.iter().enumerate() {
            if !e.is_finite() || e.y != 0.0 {
                return Err(Error::Shape(format!(
                    "element {m} at ({}, {}, {}) is not in the y = 0 plane",
                    e.x, e.y, e.z
                )));
            }
        }
        Ok(RisArray {
            elements,
            wavelength,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CartesianPoint] {
        &self.elements
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Free-space wavenumber `2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Bounding-box diagonal of the element layout, a cheap aperture proxy.
    pub fn aperture(&self) -> f64 {
        let mut min_x = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut min_z = f64::INFINITY;
        let mut max_z = f64::NEG_INFINITY;
        for e in &self.elements {
            min_x = min_x.min(e.x);
            max_x = max_x.max(e.x);
            min_z = min_z.min(e.z);
            max_z = max_z.max(e.z);
        }
        ((max_x - min_x).powi(2) + (max_z - min_z).powi(2)).sqrt()
    }
}

/// Uniform `rows x cols` grid in the xz plane, centered on the origin, with
/// the given element spacing. Element `(i, j)` sits at
/// `x = (j - (cols-1)/2) * spacing`, `z = (i - (rows-1)/2) * spacing`.
pub fn build_planar_ris(
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
) -> Result<RisArray> {
    if rows < 1 || cols < 1 {
        return Err(Error::Shape(format!(
            "grid must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Shape(format!("invalid spacing {spacing}")));
    }
    let x0 = (cols as f64 - 1.0) / 2.0;
    let z0 = (rows as f64 - 1.0) / 2.0;
    let mut elements = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            elements.push(CartesianPoint::new(
                (j as f64 - x0) * spacing,
                0.0,
                (i as f64 - z0) * spacing,
            ));
        }
    }
    RisArray::new(elements, wavelength)
}

/// Steering vector and its derivatives with respect to the probe position's
/// spherical coordinates, all evaluated at the same position.
#[derive(Debug, Clone)]
pub struct SteeringBundle {
    pub a: DVector<Complex64>,
    pub d_rho: DVector<Complex64>,
    pub d_theta: DVector<Complex64>,
    pub d_phi: DVector<Complex64>,
    pub at_position: SphericalPoint,
}

impl SteeringBundle {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

fn unit_phasor(phase: f64) -> Complex64 {
    Complex::new(phase.cos(), phase.sin())
}

/// Near-field steering vector of the array toward `p`.
///
/// The path-length difference is evaluated as
/// `(||p_m||^2 - 2 p . p_m) / (||p - p_m|| + ||p||)`, which is algebraically
/// identical to `||p - p_m|| - ||p||` but immune to the cancellation that
/// otherwise dominates at long ranges.
pub fn steering(arr: &RisArray, p: &CartesianPoint) -> Result<DVector<Complex64>> {
    if !p.is_finite() {
        return Err(Error::DegenerateGeometry("non-finite probe point".into()));
    }
    let k = arr.wavenumber();
    let rho = p.norm();
    let mut out = DVector::from_element(arr.len(), Complex::new(0.0, 0.0));
    for (m, pm) in arr.elements().iter().enumerate() {
        let d = p.distance(pm);
        if d == 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "probe point coincides with element {m}"
            )));
        }
        let delta = (pm.norm_squared() - 2.0 * p.dot(pm)) / (d + rho);
        out[m] = unit_phasor(-k * delta);
    }
    Ok(out)
}

/// Per-element spherical data of an xz-plane element: range, sin/cos of the
/// elevation angle, and the azimuth cosine (elements have azimuth 0 or pi,
/// resolved by the sign of x; irrelevant when sin(phi_m) = 0).
struct ElementAngles {
    rho_m: f64,
    sin_phi_m: f64,
    cos_phi_m: f64,
    cos_theta_m: f64,
}

fn element_angles(pm: &CartesianPoint) -> ElementAngles {
    let rho_m = pm.norm();
    if rho_m == 0.0 {
        return ElementAngles {
            rho_m: 0.0,
            sin_phi_m: 0.0,
            cos_phi_m: 1.0,
            cos_theta_m: 1.0,
        };
    }
    ElementAngles {
        rho_m,
        sin_phi_m: pm.x.abs() / rho_m,
        cos_phi_m: pm.z / rho_m,
        cos_theta_m: if pm.x >= 0.0 { 1.0 } else { -1.0 },
    }
}

/// Steering vector together with its analytic derivatives along
/// `(rho, theta, phi)` at `p`.
///
/// Writing `psi_m` for the cosine of the angle between `p` and element `m`,
/// the path difference is `delta_m = sqrt(rho^2 + rho_m^2 - 2 rho rho_m
/// psi_m) - rho` and each derivative is `-j k (d delta_m / d coord) a_m`:
///
/// ```text
/// g_rho   = (rho - rho_m psi_m) / d_m - 1
/// g_theta = rho rho_m sin(phi) sin(phi_m) sin(theta - theta_m) / d_m
/// g_phi   = -rho rho_m (cos(phi) sin(phi_m) cos(theta - theta_m)
///                       - sin(phi) cos(phi_m)) / d_m
/// ```
pub fn steering_derivatives(arr: &RisArray, p: &CartesianPoint) -> Result<SteeringBundle> {
    let sph = cart_to_sph(p)?;
    let k = arr.wavenumber();
    let rho = sph.rho;
    let (sin_theta, cos_theta) = sph.theta.sin_cos();
    let (sin_phi, cos_phi) = sph.phi.sin_cos();

    let m = arr.len();
    let zero = Complex::new(0.0, 0.0);
    let mut a = DVector::from_element(m, zero);
    let mut d_rho = DVector::from_element(m, zero);
    let mut d_theta = DVector::from_element(m, zero);
    let mut d_phi = DVector::from_element(m, zero);

    for (idx, pm) in arr.elements().iter().enumerate() {
        let ang = element_angles(pm);
        if ang.rho_m == 0.0 {
            // Element at the phase center: zero path difference, all
            // derivative factors vanish.
            a[idx] = Complex::new(1.0, 0.0);
            continue;
        }
        // theta_m is 0 or pi, so sin(theta_m) = 0 and the difference angles
        // collapse onto cos_theta_m.
        let cos_dt = cos_theta * ang.cos_theta_m;
        let sin_dt = sin_theta * ang.cos_theta_m;
        let psi = sin_phi * ang.sin_phi_m * cos_dt + cos_phi * ang.cos_phi_m;
        let d2 = rho * rho + ang.rho_m * ang.rho_m - 2.0 * rho * ang.rho_m * psi;
        let d = d2.max(0.0).sqrt();
        if d == 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "probe point coincides with element {idx}"
            )));
        }
        let delta = (ang.rho_m * ang.rho_m - 2.0 * rho * ang.rho_m * psi) / (d + rho);
        let am = unit_phasor(-k * delta);
        a[idx] = am;

        let g_rho = (rho - ang.rho_m * psi) / d - 1.0;
        let g_theta = rho * ang.rho_m * sin_phi * ang.sin_phi_m * sin_dt / d;
        let g_phi =
            -rho * ang.rho_m * (cos_phi * ang.sin_phi_m * cos_dt - sin_phi * ang.cos_phi_m) / d;

        let scale = Complex::new(0.0, -k);
        d_rho[idx] = scale * g_rho * am;
        d_theta[idx] = scale * g_theta * am;
        d_phi[idx] = scale * g_phi * am;
    }

    Ok(SteeringBundle {
        a,
        d_rho,
        d_theta,
        d_phi,
        at_position: sph,
    })
}

/// Central-difference derivatives of [`steering`] along the spherical
/// coordinates; a test oracle, not a production path.
///
/// The step is relative for the range (`h * rho`) and absolute in radians
/// for the two angles.
pub fn fd_steering_derivatives(
    arr: &RisArray,
    p: &CartesianPoint,
    h: f64,
) -> Result<SteeringBundle> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(format!(
            "step must be positive and finite, got {h}"
        )));
    }
    let sph = cart_to_sph(p)?;
    let a = steering(arr, p)?;

    let diff = |lo: SphericalPoint, hi: SphericalPoint, step: f64| -> Result<DVector<Complex64>> {
        let alo = steering(arr, &sph_to_cart(&lo))?;
        let ahi = steering(arr, &sph_to_cart(&hi))?;
        Ok((ahi - alo) / Complex::new(2.0 * step, 0.0))
    };

    let h_rho = h * sph.rho;
    if h_rho == 0.0 {
        return Err(Error::InvalidStep("relative range step underflowed".into()));
    }
    let d_rho = diff(
        SphericalPoint::new(sph.rho - h_rho, sph.theta, sph.phi),
        SphericalPoint::new(sph.rho + h_rho, sph.theta, sph.phi),
        h_rho,
    )?;
    let d_theta = diff(
        SphericalPoint::new(sph.rho, sph.theta - h, sph.phi),
        SphericalPoint::new(sph.rho, sph.theta + h, sph.phi),
        h,
    )?;
    let d_phi = diff(
        SphericalPoint::new(sph.rho, sph.theta, sph.phi - h),
        SphericalPoint::new(sph.rho, sph.theta, sph.phi + h),
        h,
    )?;

    Ok(SteeringBundle {
        a,
        d_rho,
        d_theta,
        d_phi,
        at_position: sph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn table1_like_array() -> RisArray {
        let lambda = 0.0107;
        build_planar_ris(32, 32, lambda / 2.0, lambda).unwrap()
    }

    fn rel_l2(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
        let num = (a - b).norm();
        let den = b.norm().max(1e-300);
        num / den
    }

    #[test]
    fn single_element_grid_sits_at_origin() {
        let arr = build_planar_ris(1, 1, 0.005, 0.01).unwrap();
        assert_eq!(arr.len(), 1);
        assert_eq!(arr.elements()[0], CartesianPoint::ORIGIN);
    }

    #[test]
    fn two_by_two_grid_is_centered() {
        let lambda = 1.0;
        let arr = build_planar_ris(2, 2, 0.5 * lambda, lambda).unwrap();
        let mut xs: Vec<(f64, f64)> = arr.elements().iter().map(|e| (e.x, e.z)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            xs,
            vec![(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)]
        );
        assert!(arr.elements().iter().all(|e| e.y == 0.0));
    }

    #[test]
    fn table1_grid_extent() {
        let arr = table1_like_array();
        assert_eq!(arr.len(), 1024);
        // 31 gaps of lambda/2 per side at lambda = 1.07 cm: ~16.6 cm per side.
        let side = 31.0 * 0.0107 / 2.0;
        assert_relative_eq!(arr.aperture(), side * 2.0_f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(side, 0.16585, max_relative = 1e-3);
    }

    #[test]
    fn phase_center_element_contributes_unity() {
        let arr = RisArray::new(
            vec![
                CartesianPoint::ORIGIN,
                CartesianPoint::new(0.02, 0.0, -0.01),
            ],
            0.0107,
        )
        .unwrap();
        for p in [
            CartesianPoint::new(1.0, 2.0, 1.0),
            CartesianPoint::new(-0.3, 0.4, 2.0),
        ] {
            let a = steering(&arr, &p).unwrap();
            assert_relative_eq!(a[0].re, 1.0, epsilon = 1e-15);
            assert_relative_eq!(a[0].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_rejects_probe_on_element() {
        let arr = table1_like_array();
        let hit = arr.elements()[17];
        assert!(matches!(
            steering(&arr, &hit),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn far_field_limit_matches_planar_wavefront() {
        // Modest 8x8 aperture keeps the residual curvature phase far below
        // the 1e-3 rad tolerance at rho = 1e4 * aperture.
        let lambda = 0.0107;
        let arr = build_planar_ris(8, 8, lambda / 2.0, lambda).unwrap();
        let rho = 1.0e4 * arr.aperture();
        let dir = {
            let v = CartesianPoint::new(0.4, 0.8, 0.45);
            let n = v.norm();
            CartesianPoint::new(v.x / n, v.y / n, v.z / n)
        };
        let p = CartesianPoint::new(dir.x * rho, dir.y * rho, dir.z * rho);
        let a = steering(&arr, &p).unwrap();
        let k = arr.wavenumber();
        for (m, pm) in arr.elements().iter().enumerate() {
            let expected = unit_phasor(k * dir.dot(pm));
            let phase_err = (a[m] * expected.conj()).arg().abs();
            assert!(
                phase_err < 1e-3,
                "element {m}: phase error {phase_err} rad"
            );
        }
    }

    #[test]
    fn central_element_has_zero_range_derivative() {
        // 3x3 grid: element 4 is at the origin, elements 1 and 7 on the z axis.
        let arr = build_planar_ris(3, 3, 0.005, 0.0107).unwrap();
        let b = steering_derivatives(&arr, &CartesianPoint::new(1.0, 2.0, 1.0)).unwrap();
        assert_eq!(b.d_rho[4], Complex::new(0.0, 0.0));
        assert_eq!(b.d_theta[4], Complex::new(0.0, 0.0));
        assert_eq!(b.d_phi[4], Complex::new(0.0, 0.0));
        assert_eq!(b.a[4], Complex::new(1.0, 0.0));
        // z-axis elements: sin(phi_m) = 0 kills the azimuth factor.
        assert_eq!(b.d_theta[1], Complex::new(0.0, 0.0));
        assert_eq!(b.d_theta[7], Complex::new(0.0, 0.0));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let arr = table1_like_array();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rho = rng.random_range(0.5..20.0);
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let phi = rng.random_range(0.2..std::f64::consts::PI - 0.2);
            let p = sph_to_cart(&SphericalPoint::new(rho, theta, phi));
            let analytic = steering_derivatives(&arr, &p).unwrap();
            let fd = fd_steering_derivatives(&arr, &p, 1e-7).unwrap();
            assert!(rel_l2(&analytic.d_rho, &fd.d_rho) < 1e-5, "rho at {p:?}");
            assert!(rel_l2(&analytic.d_theta, &fd.d_theta) < 1e-5, "theta at {p:?}");
            assert!(rel_l2(&analytic.d_phi, &fd.d_phi) < 1e-5, "phi at {p:?}");
        }
    }

    #[test]
    fn fd_truncation_error_grows_with_step() {
        let arr = table1_like_array();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        let analytic = steering_derivatives(&arr, &p).unwrap();
        let err = |h: f64| {
            let fd = fd_steering_derivatives(&arr, &p, h).unwrap();
            rel_l2(&fd.d_rho, &analytic.d_rho)
                + rel_l2(&fd.d_theta, &analytic.d_theta)
                + rel_l2(&fd.d_phi, &analytic.d_phi)
        };
        // O(h^2) truncation: two decades in h is four decades in error.
        let coarse = err(1e-2);
        let fine = err(1e-4);
        assert!(
            coarse > 1e2 * fine,
            "expected quadratic error growth: coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn fd_rejects_zero_step() {
        let arr = build_planar_ris(2, 2, 0.005, 0.0107).unwrap();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        assert!(matches!(
            fd_steering_derivatives(&arr, &p, 0.0),
            Err(Error::InvalidStep(_))
        ));
    }

    #[test]
    fn derivative_factors_are_purely_imaginary_relative_to_steering() {
        let arr = table1_like_array();
        let p = CartesianPoint::new(0.8, 1.7, -0.4);
        let b = steering_derivatives(&arr, &p).unwrap();
        for m in 0..arr.len() {
            for d in [&b.d_rho, &b.d_theta, &b.d_phi] {
                let ratio = d[m] / b.a[m];
                assert!(
                    ratio.re.abs() < 1e-12,
                    "element {m}: ratio {ratio} not purely imaginary"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn steering_entries_are_unit_modulus(
            rho in 0.5_f64..20.0,
            theta in -3.0_f64..3.0,
            phi in 0.2_f64..2.9,
        ) {
            let arr = build_planar_ris(4, 4, 0.0107 / 2.0, 0.0107).unwrap();
            let p = sph_to_cart(&SphericalPoint::new(rho, theta, phi));
            let a = steering(&arr, &p).unwrap();
            for m in 0..a.len() {
                prop_assert!((a[m].norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
