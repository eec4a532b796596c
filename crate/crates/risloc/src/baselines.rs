//! Reference profile generators the optimized design is benchmarked
//! against: purely random phases and directional codebooks aimed at points
//! sampled around the presumed UE position.

use nalgebra::{Complex, DMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::{steering, Complex64, RisArray};
use crate::error::{Error, Result};
use crate::geometry::CartesianPoint;

/// Random-profile baseline configuration.
#[derive(Debug, Clone, Copy)]
pub struct RandomProfileConfig {
    pub seed: u64,
    /// Draw from the quantized set {1, j, -1, -j} instead of continuous
    /// phases.
    pub quantized: bool,
}

/// Directional-codebook configuration: beams point at positions sampled
/// uniformly in the ball of radius `radius` around the presumed position.
#[derive(Debug, Clone, Copy)]
pub struct DirectionalConfig {
    pub radius: f64,
    pub seed: u64,
}

/// `M x T` matrix of i.i.d. unit-modulus profiles, column for column,
/// deterministic per seed.
pub fn random_profiles(arr: &RisArray, t: u32, cfg: &RandomProfileConfig) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = arr.len();
    let mut f = DMatrix::from_element(m, t as usize, Complex::new(0.0, 0.0));
    const QPSK: [Complex64; 4] = [
        Complex::new(1.0, 0.0),
        Complex::new(0.0, 1.0),
        Complex::new(-1.0, 0.0),
        Complex::new(0.0, -1.0),
    ];
    for col in 0..t as usize {
        for row in 0..m {
            f[(row, col)] = if cfg.quantized {
                QPSK[rng.random_range(0..4)]
            } else {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                Complex::new(phase.cos(), phase.sin())
            };
        }
    }
    f
}

fn sample_in_ball(rng: &mut ChaCha8Rng, center: &CartesianPoint, radius: f64) -> CartesianPoint {
    if radius == 0.0 {
        return *center;
    }
    // Uniform over the ball volume: isotropic direction times r * u^(1/3).
    let dir = loop {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            break [v[0] / n, v[1] / n, v[2] / n];
        }
    };
    let r = radius * rng.random::<f64>().cbrt();
    CartesianPoint::new(
        center.x + r * dir[0],
        center.y + r * dir[1],
        center.z + r * dir[2],
    )
}

const MAX_RESAMPLES: usize = 64;

/// Directional codebook: each column phase-aligns the reflection toward one
/// position sampled uniformly in the uncertainty ball around `p`. With
/// `radius = 0` every beam is the conjugated steering vector at `p` itself.
pub fn directional_codebook(
    arr: &RisArray,
    p: &CartesianPoint,
    t: u32,
    cfg: &DirectionalConfig,
) -> Result<DMatrix<Complex64>> {
    if !(cfg.radius >= 0.0 && cfg.radius.is_finite()) {
        return Err(Error::Shape(format!("invalid ball radius {}", cfg.radius)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = arr.len();
    let mut f = DMatrix::from_element(m, t as usize, Complex::new(0.0, 0.0));
    for col in 0..t as usize {
        let mut placed = false;
        for _ in 0..MAX_RESAMPLES {
            let target = sample_in_ball(&mut rng, p, cfg.radius);
            match steering(arr, &target) {
                Ok(a) => {
                    // a is unit modulus, so its conjugate is exactly the
                    // phase-aligning profile.
                    for row in 0..m {
                        f[(row, col)] = a[row].conj();
                    }
                    placed = true;
                    break;
                }
                Err(Error::DegenerateGeometry(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        if !placed {
            return Err(Error::DegenerateGeometry(format!(
                "could not sample a valid codebook target for column {col} after {MAX_RESAMPLES} tries"
            )));
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::build_planar_ris;
    use approx::assert_relative_eq;

    fn test_array() -> RisArray {
        let lambda = 0.0107;
        build_planar_ris(8, 8, lambda / 2.0, lambda).unwrap()
    }

    #[test]
    fn random_profiles_are_unit_modulus_and_deterministic() {
        let arr = test_array();
        let cfg = RandomProfileConfig {
            seed: 42,
            quantized: false,
        };
        let f1 = random_profiles(&arr, 10, &cfg);
        let f2 = random_profiles(&arr, 10, &cfg);
        assert_eq!(f1, f2);
        for v in f1.iter() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        let other = random_profiles(
            &arr,
            10,
            &RandomProfileConfig {
                seed: 43,
                quantized: false,
            },
        );
        assert_ne!(f1, other);
    }

    #[test]
    fn quantized_profiles_use_the_four_symbol_set() {
        let arr = test_array();
        let f = random_profiles(
            &arr,
            6,
            &RandomProfileConfig {
                seed: 7,
                quantized: true,
            },
        );
        for v in f.iter() {
            let is_symbol = (v.re.abs() == 1.0 && v.im == 0.0) || (v.re == 0.0 && v.im.abs() == 1.0);
            assert!(is_symbol, "entry {v} outside the quantized set");
        }
    }

    #[test]
    fn zero_radius_codebook_is_perfectly_aligned() {
        let arr = test_array();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        let f = directional_codebook(
            &arr,
            &p,
            5,
            &DirectionalConfig {
                radius: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        let a = steering(&arr, &p).unwrap();
        let m = arr.len() as f64;
        for col in 0..5 {
            let corr: Complex64 = (0..arr.len()).map(|row| a[row] * f[(row, col)]).sum();
            assert_relative_eq!(corr.norm(), m, max_relative = 1e-12);
        }
    }

    #[test]
    fn directional_codebook_is_deterministic_per_seed() {
        let arr = test_array();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        let cfg = DirectionalConfig {
            radius: 0.5,
            seed: 11,
        };
        let f1 = directional_codebook(&arr, &p, 8, &cfg).unwrap();
        let f2 = directional_codebook(&arr, &p, 8, &cfg).unwrap();
        assert_eq!(f1, f2);
        for v in f1.iter() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}
