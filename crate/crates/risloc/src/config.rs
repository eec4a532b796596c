//! Scenario configuration: flat JSON in, validated linear-unit quantities
//! out. Defaults reproduce the canonical indoor mmWave setup (28 GHz
//! carrier, 120 kHz pilot bandwidth, 20 dBm transmit power, 32x32 RIS, 40
//! transmissions, BS at (5, 5, 0), RIS at the origin).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::array::{build_planar_ris, RisArray};
use crate::design::DesignContext;
use crate::error::{Error, Result};
use crate::fim::{ChannelGain, SnrScale};
use crate::geometry::CartesianPoint;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How the reflected-path gain is obtained.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    /// `|beta| = lambda^2 / ((4 pi)^2 d_bs_ris d_ris_ue)`, zero phase.
    FreeSpaceCascaded,
    Explicit { beta_r: f64, beta_i: f64 },
}

/// One experiment's geometry, RF, and transmission parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub n0_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub ptx_dbm: f64,
    /// Number of transmissions `T`.
    pub t: u32,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub spacing_over_lambda: f64,
    pub p_bs: [f64; 3],
    pub p_ue: [f64; 3],
    pub gain_model: GainModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fc_hz: 28e9,
            bandwidth_hz: 120e3,
            n0_dbm_hz: -174.0,
            noise_figure_db: 8.0,
            ptx_dbm: 20.0,
            t: 40,
            ris_rows: 32,
            ris_cols: 32,
            spacing_over_lambda: 0.5,
            p_bs: [5.0, 5.0, 0.0],
            p_ue: [1.0, 2.0, 1.0],
            gain_model: GainModel::FreeSpaceCascaded,
            seed: 0,
        }
    }
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be > 0, got {v}")))
            }
        };
        positive("fc_hz", self.fc_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("spacing_over_lambda", self.spacing_over_lambda)?;
        for (field, v) in [
            ("n0_dbm_hz", self.n0_dbm_hz),
            ("noise_figure_db", self.noise_figure_db),
            ("ptx_dbm", self.ptx_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, format!("must be finite, got {v}")));
            }
        }
        if self.t == 0 {
            return Err(Error::config("t", "needs at least one transmission"));
        }
        if self.ris_rows == 0 {
            return Err(Error::config("ris_rows", "needs at least one row"));
        }
        if self.ris_cols == 0 {
            return Err(Error::config("ris_cols", "needs at least one column"));
        }
        let ue = CartesianPoint::new(self.p_ue[0], self.p_ue[1], self.p_ue[2]);
        if !ue.is_finite() {
            return Err(Error::config("p_ue", "coordinates must be finite"));
        }
        if ue.x * ue.x + ue.y * ue.y == 0.0 {
            return Err(Error::config(
                "p_ue",
                "position on the z axis makes the azimuth unobservable",
            ));
        }
        let bs = CartesianPoint::new(self.p_bs[0], self.p_bs[1], self.p_bs[2]);
        if !bs.is_finite() {
            return Err(Error::config("p_bs", "coordinates must be finite"));
        }
        if bs.norm() == 0.0 {
            return Err(Error::config("p_bs", "BS cannot sit at the RIS phase center"));
        }
        if let GainModel::Explicit { beta_r, beta_i } = self.gain_model {
            if !(beta_r.is_finite() && beta_i.is_finite()) {
                return Err(Error::config("gain_model", "explicit gain must be finite"));
            }
        }
        Ok(())
    }

    pub fn ue_position(&self) -> CartesianPoint {
        CartesianPoint::new(self.p_ue[0], self.p_ue[1], self.p_ue[2])
    }

    pub fn bs_position(&self) -> CartesianPoint {
        CartesianPoint::new(self.p_bs[0], self.p_bs[1], self.p_bs[2])
    }
}

/// Loads a scenario from a flat JSON file. An empty file means "all
/// defaults"; unknown keys are rejected.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: ScenarioConfig = if text.trim().is_empty() {
        ScenarioConfig::default()
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config {
            field: "<json>".into(),
            message: e.to_string(),
        })?
    };
    config.validate()?;
    Ok(config)
}

/// Validated scenario with derived linear-unit quantities.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    array: RisArray,
    wavelength: f64,
    es: f64,
    n0_eff: f64,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let wavelength = SPEED_OF_LIGHT / config.fc_hz;
        let array = build_planar_ris(
            config.ris_rows,
            config.ris_cols,
            config.spacing_over_lambda * wavelength,
            wavelength,
        )?;
        let es = dbm_to_watts(config.ptx_dbm) / config.bandwidth_hz;
        let n0_eff = dbm_to_watts(config.n0_dbm_hz) * db_to_linear(config.noise_figure_db);
        Ok(Scenario {
            config,
            array,
            wavelength,
            es,
            n0_eff,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn array(&self) -> &RisArray {
        &self.array
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Transmit symbol energy `P_tx / W` in joules.
    pub fn symbol_energy(&self) -> f64 {
        self.es
    }

    /// Effective noise PSD `N0 * n_f` in W/Hz.
    pub fn noise_psd(&self) -> f64 {
        self.n0_eff
    }

    pub fn snr(&self) -> SnrScale {
        SnrScale::new(self.es, self.n0_eff).expect("validated scenario")
    }

    /// Channel gain at a UE position per the configured model.
    pub fn beta_at(&self, p_ue: &CartesianPoint) -> Result<ChannelGain> {
        match self.config.gain_model {
            GainModel::Explicit { beta_r, beta_i } => Ok(ChannelGain::new(beta_r, beta_i)),
            GainModel::FreeSpaceCascaded => {
                let d_bs = self.config.bs_position().norm();
                let d_ue = p_ue.norm();
                if d_ue == 0.0 {
                    return Err(Error::DegenerateGeometry(
                        "UE at the RIS phase center".into(),
                    ));
                }
                let four_pi_sq = (4.0 * std::f64::consts::PI).powi(2);
                let mag = self.wavelength * self.wavelength / (four_pi_sq * d_bs * d_ue);
                Ok(ChannelGain::new(mag, 0.0))
            }
        }
    }

    /// Design context at an arbitrary UE position (the sweep moves the UE).
    pub fn context_at(&self, p_ue: &CartesianPoint) -> Result<DesignContext> {
        let beta = self.beta_at(p_ue)?;
        DesignContext::new(self.array.clone(), *p_ue, beta, self.snr())
    }

    /// Design context at the configured UE position.
    pub fn context(&self) -> Result<DesignContext> {
        self.context_at(&self.config.ue_position())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_file_yields_table_defaults() {
        let dir = std::env::temp_dir().join("risloc-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.json");
        std::fs::write(&path, "").unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.fc_hz, 28e9);
        assert_eq!(cfg.bandwidth_hz, 120e3);
        assert_eq!(cfg.ptx_dbm, 20.0);
        assert_eq!(cfg.t, 40);
        assert_eq!((cfg.ris_rows, cfg.ris_cols), (32, 32));
    }

    #[test]
    fn zero_transmissions_rejected() {
        let cfg = ScenarioConfig {
            t: 0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "t"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn ue_on_z_axis_rejected() {
        let cfg = ScenarioConfig {
            p_ue: [0.0, 0.0, 2.0],
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "p_ue"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = std::env::temp_dir().join("risloc-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unknown.json");
        std::fs::write(&path, r#"{"fc_hz": 28e9, "bogus": 1}"#).unwrap();
        assert!(matches!(load_config(&path), Err(Error::Config { .. })));
    }

    #[test]
    fn db_conversions() {
        let scen = Scenario::from_config(ScenarioConfig::default()).unwrap();
        assert_relative_eq!(scen.symbol_energy(), 0.1 / 120e3, max_relative = 1e-12);
        assert_relative_eq!(
            scen.noise_psd(),
            10f64.powf(-20.4) * 10f64.powf(0.8),
            max_relative = 1e-12
        );
        assert_relative_eq!(scen.wavelength(), 0.0107, max_relative = 1e-2);
    }

    #[test]
    fn cascaded_gain_magnitude() {
        let scen = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let p = CartesianPoint::new(1.0, 2.0, 1.0);
        let beta = scen.beta_at(&p).unwrap();
        let lambda = scen.wavelength();
        let expect = lambda * lambda
            / ((4.0 * std::f64::consts::PI).powi(2) * 50f64.sqrt() * 6f64.sqrt());
        assert_relative_eq!(beta.re, expect, max_relative = 1e-12);
        assert_eq!(beta.im, 0.0);

        let explicit = Scenario::from_config(ScenarioConfig {
            gain_model: GainModel::Explicit {
                beta_r: 1e-7,
                beta_i: -2e-7,
            },
            ..Default::default()
        })
        .unwrap();
        let b = explicit.beta_at(&p).unwrap();
        assert_eq!((b.re, b.im), (1e-7, -2e-7));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ScenarioConfig {
            seed: 9,
            t: 80,
            gain_model: GainModel::Explicit {
                beta_r: 0.5,
                beta_i: 0.25,
            },
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
