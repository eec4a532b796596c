//! Cartesian/spherical conversions and the 5x5 parameter Jacobian.
//!
//! Both coordinate systems share one origin (the RIS phase center). The
//! spherical convention is physics-style: `rho` is the range, `theta` the
//! azimuth measured from the positive x axis in the xy plane, and `phi` the
//! elevation measured down from the positive z axis, so `phi` lives in
//! `[0, pi]`.
//!
//! The parameter vector behind the Jacobian is `(rho, theta, phi, beta_r,
//! beta_i)` in spherical form and `(x, y, z, beta_r, beta_i)` in Cartesian
//! form; the channel-gain components pass through untouched, which pins the
//! bottom-right 2x2 block of the Jacobian to the identity.

use nalgebra::Matrix5;

use crate::error::{Error, Result};

/// A point in Cartesian coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub const ORIGIN: CartesianPoint = CartesianPoint {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        CartesianPoint { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn dot(&self, other: &CartesianPoint) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A point in spherical coordinates: range `rho` (m), azimuth `theta` (rad,
/// from +x), elevation `phi` (rad, from +z, in `[0, pi]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn new(rho: f64, theta: f64, phi: f64) -> Self {
        SphericalPoint { rho, theta, phi }
    }
}

/// Jacobian `C = d(zeta_sph)/d(zeta_car)` of the spherical parameters with
/// respect to the Cartesian ones, rows ordered `(rho, theta, phi, beta_r,
/// beta_i)` and columns `(x, y, z, beta_r, beta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix(Matrix5<f64>);

impl JacobianMatrix {
    /// Identity transform; handy for tests where spherical and Cartesian
    /// parameters are deliberately conflated.
    pub fn identity() -> Self {
        JacobianMatrix(Matrix5::identity())
    }

    pub fn matrix(&self) -> &Matrix5<f64> {
        &self.0
    }
}

/// Converts a Cartesian point to spherical coordinates.
///
/// On the z axis the azimuth is conventionally 0 (that is what `atan2(0, 0)`
/// yields). The origin itself has no defined angles and is rejected.
pub fn cart_to_sph(p: &CartesianPoint) -> Result<SphericalPoint> {
    if !p.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "non-finite point ({}, {}, {})",
            p.x, p.y, p.z
        )));
    }
    let rho = p.norm();
    if rho == 0.0 {
        return Err(Error::DegenerateGeometry(
            "angles are undefined at the origin".into(),
        ));
    }
    let theta = p.y.atan2(p.x);
    let phi = (p.z / rho).clamp(-1.0, 1.0).acos();
    Ok(SphericalPoint { rho, theta, phi })
}

/// Converts a spherical point to Cartesian coordinates.
pub fn sph_to_cart(s: &SphericalPoint) -> CartesianPoint {
    let (sin_theta, cos_theta) = s.theta.sin_cos();
    let (sin_phi, cos_phi) = s.phi.sin_cos();
    CartesianPoint {
        x: s.rho * cos_theta * sin_phi,
        y: s.rho * sin_theta * sin_phi,
        z: s.rho * cos_phi,
    }
}

/// Analytic Jacobian of `cart_to_sph` extended with the pass-through gain
/// parameters.
///
/// Undefined on the z axis (`x*x + y*y == 0`), where the azimuth derivative
/// blows up; callers are expected to keep probe points off the axis.
pub fn jacobian(p: &CartesianPoint) -> Result<JacobianMatrix> {
    let rxy2 = p.x * p.x + p.y * p.y;
    if !p.is_finite() || rxy2 == 0.0 {
        return Err(Error::DegenerateGeometry(
            "azimuth derivatives are undefined on the z axis".into(),
        ));
    }
    let rho2 = rxy2 + p.z * p.z;
    let rho = rho2.sqrt();
    let rxy = rxy2.sqrt();

    let mut c = Matrix5::zeros();
    // d(rho)/d(x, y, z)
    c[(0, 0)] = p.x / rho;
    c[(0, 1)] = p.y / rho;
    c[(0, 2)] = p.z / rho;
    // d(theta)/d(x, y, z); note the minus sign on the x entry
    c[(1, 0)] = -p.y / rxy2;
    c[(1, 1)] = p.x / rxy2;
    // d(phi)/d(x, y, z)
    c[(2, 0)] = p.x * p.z / (rxy * rho2);
    c[(2, 1)] = p.y * p.z / (rxy * rho2);
    c[(2, 2)] = -rxy / rho2;
    // gain components pass through
    c[(3, 3)] = 1.0;
    c[(4, 4)] = 1.0;
    Ok(JacobianMatrix(c))
}
