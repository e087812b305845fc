//! JSON run configuration in natural units.
//!
//! Keys carry their unit in the name (`carrier_ghz`, `sigma2_dbm`,
//! `radius_m`, ...). Every key is optional and defaults to the reference
//! 60 GHz system; unknown keys are rejected. [`RunConfig::ofdm`] and
//! [`RunConfig::sweep`] convert to SI for the library.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::beamformer::OptimizerConfig;
use crate::harness::{GridPolicy, SweepConfig, ThetaPolicy, TrialSettings};
use crate::ml::LmSettings;
use crate::signal::{dbm_to_watts, OfdmConfig};

/// Environment variable naming the config file used when none is given.
pub const CONFIG_ENV: &str = "NFISAC_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub carrier_ghz: f64,
    pub subcarriers: usize,
    pub subcarrier_spacing_khz: f64,
    pub symbols: usize,
    /// Cyclic prefix length as a fraction of the useful symbol `1/Δf`.
    pub cp_fraction: f64,
    pub tx_power_mw: f64,
    /// Accepts a number or a string such as `"-74 dBm"`.
    #[serde(deserialize_with = "dbm_value")]
    pub sigma2_dbm: f64,
    pub doppler_hz: f64,
    pub n_elements: usize,
    pub radii_m: Vec<f64>,
    pub distances_m: Vec<f64>,
    /// Fixed user azimuth; a fresh uniform draw per trial when absent.
    pub theta_deg: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Subcarrier count for Monte Carlo runs; `None` keeps `subcarriers`.
    pub mc_subcarriers: Option<usize>,
    pub noise_free_echo: bool,
    pub grid: GridPolicy,
    pub optimizer: OptimizerConfig,
    pub lm: LmSettings,
    pub output_dir: String,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub verbosity: String,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 60.0,
            subcarriers: 2048,
            subcarrier_spacing_khz: 480.0,
            symbols: 14,
            cp_fraction: 0.07,
            tx_power_mw: 100.0,
            sigma2_dbm: -74.0,
            doppler_hz: 0.0,
            n_elements: 64,
            radii_m: vec![0.5, 1.0, 2.0, 5.0],
            distances_m: vec![10.0, 25.0, 50.0, 100.0, 200.0, 350.0],
            theta_deg: None,
            trials: 200,
            master_seed: 2024,
            mc_subcarriers: Some(128),
            noise_free_echo: false,
            grid: GridPolicy::default(),
            optimizer: OptimizerConfig::default(),
            lm: LmSettings::default(),
            output_dir: "out".to_string(),
            verbosity: "info".to_string(),
            workers: None,
        }
    }
}

fn dbm_value<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Num(x) => Ok(x),
        Raw::Text(s) => parse_dbm(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses `"-74"`, `"-74 dBm"` or `"−74dBm"` (Unicode minus allowed).
pub fn parse_dbm(text: &str) -> Result<f64, String> {
    let t = text.trim().replace('\u{2212}', "-");
    let num = t
        .strip_suffix("dBm")
        .or_else(|| t.strip_suffix("dbm"))
        .unwrap_or(&t)
        .trim();
    num.parse::<f64>()
        .map_err(|_| format!("`{text}` is not a power in dBm"))
}

impl RunConfig {
    /// Parses and validates JSON text.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(bad(key, format!("{x} must be positive")))
            }
        };
        positive("carrier_ghz", self.carrier_ghz)?;
        positive("subcarrier_spacing_khz", self.subcarrier_spacing_khz)?;
        positive("tx_power_mw", self.tx_power_mw)?;
        if self.subcarriers == 0 {
            return Err(bad("subcarriers", "must be at least 1"));
        }
        if self.symbols == 0 {
            return Err(bad("symbols", "must be at least 1"));
        }
        if !(self.cp_fraction.is_finite() && self.cp_fraction >= 0.0) {
            return Err(bad("cp_fraction", "must be non-negative"));
        }
        if !self.sigma2_dbm.is_finite() && self.sigma2_dbm != f64::NEG_INFINITY {
            return Err(bad("sigma2_dbm", "must be finite"));
        }
        if self.ofdm().validate().is_err() {
            return Err(bad("doppler_hz", "must not exceed 1% of the subcarrier spacing"));
        }
        if self.n_elements == 0 {
            return Err(bad("n_elements", "must be at least 1"));
        }
        if self.radii_m.is_empty() {
            return Err(bad("radii_m", "must list at least one radius"));
        }
        for &r in &self.radii_m {
            positive("radii_m", r)?;
        }
        if self.distances_m.is_empty() {
            return Err(bad("distances_m", "must list at least one distance"));
        }
        let r_max = self.radii_m.iter().cloned().fold(0.0, f64::max);
        for &d in &self.distances_m {
            if !(d.is_finite() && d > r_max) {
                return Err(bad(
                    "distances_m",
                    format!("distance {d} m must exceed every radius (largest {r_max} m)"),
                ));
            }
        }
        if let Some(t) = self.theta_deg {
            if !t.is_finite() {
                return Err(bad("theta_deg", "must be finite"));
            }
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if self.mc_subcarriers == Some(0) {
            return Err(bad("mc_subcarriers", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1"));
        }
        if self.verbosity.parse::<log::LevelFilter>().is_err() {
            return Err(bad("verbosity", format!("unknown level `{}`", self.verbosity)));
        }
        let d_max = self.grid.d_max_m();
        if !(d_max.is_finite() && d_max > 2.0 * r_max && d_max > 1.0) {
            return Err(bad("grid.d_max_m", "must exceed max(2R, 1 m)"));
        }
        self.optimizer
            .validate()
            .map_err(|e| bad("optimizer", e.to_string()))?;
        self.lm.validate().map_err(|e| bad("lm", e.to_string()))?;
        Ok(())
    }

    /// Link and numerology in SI units, with the full subcarrier count.
    pub fn ofdm(&self) -> OfdmConfig {
        let delta_f_hz = self.subcarrier_spacing_khz * 1e3;
        OfdmConfig {
            m_subcarriers: self.subcarriers,
            n_symbols: self.symbols,
            delta_f_hz,
            t_cp_s: self.cp_fraction / delta_f_hz,
            p_t_w: self.tx_power_mw * 1e-3,
            sigma2_w: dbm_to_watts(self.sigma2_dbm),
            carrier_hz: self.carrier_ghz * 1e9,
            nu0_hz: self.doppler_hz,
        }
    }

    /// Sweep description; `monte_carlo` selects the reduced subcarrier count.
    pub fn sweep(&self, monte_carlo: bool) -> SweepConfig {
        let mut ofdm = self.ofdm();
        if monte_carlo {
            if let Some(m) = self.mc_subcarriers {
                ofdm.m_subcarriers = m;
            }
        }
        SweepConfig {
            radii_m: self.radii_m.clone(),
            distances_m: self.distances_m.clone(),
            theta_policy: match self.theta_deg {
                Some(t) => ThetaPolicy::Fixed {
                    theta_rad: t.to_radians(),
                },
                None => ThetaPolicy::Uniform,
            },
            trials_per_point: self.trials,
            master_seed: self.master_seed,
            trial: TrialSettings {
                n_elements: self.n_elements,
                ofdm,
                grid: self.grid,
                lm: self.lm,
                optimizer: self.optimizer,
                noise_free_echo: self.noise_free_echo,
            },
        }
    }
}
