//! Monte Carlo driver: per-trial pipeline, RMSE/bound summaries, rate
//! curves and deterministic bound tables.
//!
//! A trial designs the sensing beam at the true position, synthesizes one
//! slot of echoes, runs the ML estimator and scores the communication link
//! with conjugate-focus beams built from the estimate and from the truth.
//! Every random draw is keyed by `(master_seed, radius, distance, trial)`,
//! and trials are collected in index order, so a sweep is bitwise
//! reproducible regardless of how rayon schedules the work.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::{conjugate_focus_beamformer, optimize_beamformer, OptimizerConfig};
use crate::crlb::{crlb_expanded, crlb_from_fim, fim_full_model};
use crate::error::{invalid, Error, Result};
use crate::geometry::{angle_distance, PolarPosition, UcaGeometry};
use crate::ml::{estimate, GridSpec, LmSettings, Resolution};
use crate::rng::{child_seed, rng_from_seed};
use crate::signal::{achievable_rate, generate_pilots, synthesize_observation, ue_received_snr, OfdmConfig};

/// Range error below which a converged trial counts as a success, meters.
pub const SUCCESS_RANGE_M: f64 = 0.5;
/// Angle error below which a converged trial counts as a success, degrees.
pub const SUCCESS_ANGLE_DEG: f64 = 2.0;

/// Noise power used to design beams when the configured link is noiseless.
/// The bound scales as `σ²`, so the optimal beam does not depend on it.
const DESIGN_SIGMA2_FALLBACK_W: f64 = 3.981_071_705_534_972e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaPolicy {
    Fixed { theta_rad: f64 },
    /// Independent uniform draw over `[0, 2π)` per trial.
    Uniform,
}

/// How the estimator grid is laid out for a given array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridPolicy {
    /// Angle and range steps tied to the main-lobe size of each array.
    Resolving {
        #[serde(default)]
        resolution: Resolution,
        d_max_m: f64,
        n_basins: usize,
    },
    LogSpaced {
        d_max_m: f64,
        n_d: usize,
        n_theta: usize,
        n_basins: usize,
    },
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Resolving {
            resolution: Resolution::default(),
            d_max_m: 400.0,
            n_basins: 15,
        }
    }
}

impl GridPolicy {
    pub fn spec(&self, geom: &UcaGeometry, cfg: &OfdmConfig) -> GridSpec {
        match *self {
            GridPolicy::Resolving {
                resolution,
                d_max_m,
                n_basins,
            } => GridSpec::resolving(geom, cfg, d_max_m, &resolution, n_basins),
            GridPolicy::LogSpaced {
                d_max_m,
                n_d,
                n_theta,
                n_basins,
            } => GridSpec::log_spaced(geom, d_max_m, n_d, n_theta, n_basins),
        }
    }

    pub fn d_max_m(&self) -> f64 {
        match *self {
            GridPolicy::Resolving { d_max_m, .. } | GridPolicy::LogSpaced { d_max_m, .. } => d_max_m,
        }
    }
}

/// Everything a single trial needs besides the scenario and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSettings {
    pub n_elements: usize,
    pub ofdm: OfdmConfig,
    pub grid: GridPolicy,
    pub lm: LmSettings,
    pub optimizer: OptimizerConfig,
    /// Synthesize echoes without noise while keeping the configured `σ²`
    /// for the link budget and the bound.
    pub noise_free_echo: bool,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            n_elements: 64,
            ofdm: OfdmConfig::reference_60ghz().with_subcarriers(128),
            grid: GridPolicy::default(),
            lm: LmSettings::default(),
            optimizer: OptimizerConfig::default(),
            noise_free_echo: false,
        }
    }
}

impl TrialSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(invalid("n_elements", "must be at least 1"));
        }
        self.ofdm.validate()?;
        self.lm.validate()?;
        self.optimizer.validate()
    }

    pub fn geometry(&self, radius_m: f64) -> Result<UcaGeometry> {
        UcaGeometry::new(self.n_elements, radius_m, self.ofdm.wavelength_m())
    }

    /// The link configuration the beam is designed for.
    fn design_config(&self) -> OfdmConfig {
        if self.ofdm.sigma2_w > 0.0 {
            self.ofdm
        } else {
            self.ofdm.with_noise(DESIGN_SIGMA2_FALLBACK_W)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub radii_m: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub theta_policy: ThetaPolicy,
    pub trials_per_point: usize,
    pub master_seed: u64,
    pub trial: TrialSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            radii_m: vec![0.5, 1.0, 2.0, 5.0],
            distances_m: vec![10.0, 25.0, 50.0, 100.0, 200.0, 350.0],
            theta_policy: ThetaPolicy::Uniform,
            trials_per_point: 200,
            master_seed: 2024,
            trial: TrialSettings::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.trial.validate()?;
        if self.radii_m.is_empty() {
            return Err(invalid("radii_m", "must not be empty"));
        }
        if self.distances_m.is_empty() {
            return Err(invalid("distances_m", "must not be empty"));
        }
        for &r in &self.radii_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("radii_m", format!("radius {r} must be positive")));
            }
            for &d in &self.distances_m {
                if !(d > r && d.is_finite()) {
                    return Err(Error::PositionInsideArray { d_m: d, radius_m: r });
                }
            }
        }
        if self.trials_per_point == 0 {
            return Err(invalid("trials_per_point", "must be at least 1"));
        }
        if let ThetaPolicy::Fixed { theta_rad } = self.theta_policy {
            if !theta_rad.is_finite() {
                return Err(invalid("theta_policy", "angle must be finite"));
            }
        }
        Ok(())
    }

    /// Seed of trial `t` at grid point `(radius index, distance index)`.
    pub fn trial_seed(&self, ri: usize, di: usize, t: usize) -> u64 {
        child_seed(self.master_seed, &[ri as u64, di as u64, t as u64])
    }

    fn trial_theta(&self, seed: u64) -> f64 {
        match self.theta_policy {
            ThetaPolicy::Fixed { theta_rad } => theta_rad,
            ThetaPolicy::Uniform => rng_from_seed(child_seed(seed, &[0])).gen_range(0.0..TAU),
        }
    }

    /// Angle used by the deterministic bound table.
    fn reference_theta(&self) -> f64 {
        match self.theta_policy {
            ThetaPolicy::Fixed { theta_rad } => theta_rad,
            ThetaPolicy::Uniform => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub radius_m: f64,
    pub d_true_m: f64,
    pub theta_true_rad: f64,
    pub d_hat_m: f64,
    pub theta_hat_rad: f64,
    pub converged: bool,
    pub success: bool,
    pub snr_db: f64,
    pub rate_est_bps: f64,
    pub rate_opt_bps: f64,
    /// Bound at the true position with the trial's beam.
    pub crlb_var_d: f64,
    pub crlb_var_theta: f64,
    /// Range bound when the delay phase is also treated as informative.
    pub full_model_var_d: f64,
    pub seed: u64,
    /// Why the pipeline stopped early, if it did.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn range_error_m(&self) -> f64 {
        self.d_hat_m - self.d_true_m
    }

    pub fn angle_error_rad(&self) -> f64 {
        angle_distance(self.theta_hat_rad, self.theta_true_rad)
    }

    fn failed(radius_m: f64, d_true_m: f64, theta_true_rad: f64, seed: u64, err: Error) -> Self {
        Self {
            radius_m,
            d_true_m,
            theta_true_rad,
            d_hat_m: f64::NAN,
            theta_hat_rad: f64::NAN,
            converged: false,
            success: false,
            snr_db: f64::NAN,
            rate_est_bps: f64::NAN,
            rate_opt_bps: f64::NAN,
            crlb_var_d: f64::NAN,
            crlb_var_theta: f64::NAN,
            full_model_var_d: f64::NAN,
            seed,
            error: Some(err.to_string()),
        }
    }
}

/// Converged, and within 0.5 m and 2° of the truth.
pub fn is_success(converged: bool, range_err_m: f64, angle_err_rad: f64) -> bool {
    converged && range_err_m.abs() < SUCCESS_RANGE_M && angle_err_rad < SUCCESS_ANGLE_DEG.to_radians()
}

/// CRLB-optimal beam at `pos`, designed against the link budget of `settings`.
pub fn sensing_beam(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    settings: &TrialSettings,
) -> Result<Vec<Complex64>> {
    Ok(optimize_beamformer(geom, pos, &settings.design_config(), &settings.optimizer, None)?.beamformer)
}

/// One full sensing and communication trial. Never fails: pipeline errors
/// are stored in the record.
pub fn run_trial(
    radius_m: f64,
    d_true_m: f64,
    theta_true_rad: f64,
    settings: &TrialSettings,
    seed: u64,
) -> TrialRecord {
    match trial_inner(radius_m, d_true_m, theta_true_rad, settings, seed) {
        Ok(r) => r,
        Err(e) => TrialRecord::failed(radius_m, d_true_m, theta_true_rad, seed, e),
    }
}

fn trial_inner(
    radius_m: f64,
    d_true_m: f64,
    theta_true_rad: f64,
    settings: &TrialSettings,
    seed: u64,
) -> Result<TrialRecord> {
    settings.validate()?;
    let geom = settings.geometry(radius_m)?;
    let truth = PolarPosition::new(d_true_m, theta_true_rad)?;
    geom.check_position(&truth)?;
    let link = settings.ofdm;
    let f = sensing_beam(&geom, &truth, settings)?;

    let echo_cfg = if settings.noise_free_echo {
        link.with_noise(0.0)
    } else {
        link
    };
    let pilots = generate_pilots(&echo_cfg, child_seed(seed, &[1]));
    let obs = synthesize_observation(&geom, &truth, &f, &echo_cfg, &pilots, child_seed(seed, &[2]))?;
    let spec = settings.grid.spec(&geom, &echo_cfg);
    let est = estimate(&obs, &geom, &spec, &settings.lm)?;

    let snr = ue_received_snr(&geom, &truth, &f, &link)?;
    let est_pos = est.position();
    let rate_est = if geom.check_position(&est_pos).is_ok() {
        achievable_rate(&geom, &conjugate_focus_beamformer(&geom, &est_pos), &link, &truth)?
    } else {
        0.0
    };
    let rate_opt = achievable_rate(&geom, &conjugate_focus_beamformer(&geom, &truth), &link, &truth)?;
    let bound = bound_or_nan(&geom, &truth, &f, &link);

    let range_err = est.d_hat_m - d_true_m;
    let angle_err = angle_distance(est.theta_hat_rad, theta_true_rad);
    Ok(TrialRecord {
        radius_m,
        d_true_m,
        theta_true_rad,
        d_hat_m: est.d_hat_m,
        theta_hat_rad: est.theta_hat_rad,
        converged: est.converged,
        success: is_success(est.converged, range_err, angle_err),
        snr_db: snr.db(),
        rate_est_bps: rate_est,
        rate_opt_bps: rate_opt,
        crlb_var_d: bound.0,
        crlb_var_theta: bound.1,
        full_model_var_d: bound.2,
        seed,
        error: None,
    })
}

/// `(Var d, Var θ, full-model Var d)`; NaN when the link is noiseless or the
/// point is unidentifiable.
fn bound_or_nan(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> (f64, f64, f64) {
    let (var_d, var_theta) = match crlb_expanded(geom, pos, f, cfg) {
        Ok(b) => (b.var_d, b.var_theta),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let full = fim_full_model(geom, pos, f, cfg)
        .and_then(|j| crlb_from_fim(&j))
        .map_or(f64::NAN, |b| b.var_d);
    (var_d, var_theta, full)
}

/// All trials of a sweep, ordered by (radius, distance, trial).
pub fn run_trials(config: &SweepConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for (ri, &r) in config.radii_m.iter().enumerate() {
        for (di, &d) in config.distances_m.iter().enumerate() {
            for t in 0..config.trials_per_point {
                jobs.push((r, d, config.trial_seed(ri, di, t)));
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|&(r, d, seed)| run_trial(r, d, config.trial_theta(seed), &config.trial, seed))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub radius_m: f64,
    pub d_m: f64,
    pub rmse_d_m: f64,
    /// Standard error of `rmse_d_m` (delta method on the MSE).
    pub rmse_d_se_m: f64,
    pub rmse_theta_rad: f64,
    pub rmse_theta_se_rad: f64,
    pub crlb_d_m: f64,
    pub crlb_theta_rad: f64,
    pub full_model_crlb_d_m: f64,
    pub convergence_rate: f64,
    pub success_rate: f64,
    pub mean_snr_db: f64,
    pub mean_rate_est_bps: f64,
    pub mean_rate_opt_bps: f64,
    pub n_trials: usize,
}

pub type SweepSummary = Vec<SummaryRow>;

/// `(rms, standard error of rms)` of the given errors.
fn rms_with_se(errors: &[f64]) -> (f64, f64) {
    let n = errors.len() as f64;
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mse = sq.iter().sum::<f64>() / n;
    let rmse = mse.sqrt();
    if errors.len() < 2 || rmse == 0.0 {
        return (rmse, 0.0);
    }
    let var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (n - 1.0);
    (rmse, (var / n).sqrt() / (2.0 * rmse))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Groups records by `(radius, distance)` in first-appearance order.
fn group(records: &[TrialRecord]) -> Vec<((f64, f64), Vec<&TrialRecord>)> {
    let mut out: Vec<((f64, f64), Vec<&TrialRecord>)> = Vec::new();
    for rec in records {
        let key = (rec.radius_m, rec.d_true_m);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(rec),
            None => out.push((key, vec![rec])),
        }
    }
    out
}

/// Per-point statistics over all trials, converged or not. Errors of failed
/// pipelines count as NaN and propagate into the RMSE.
pub fn summarize(records: &[TrialRecord]) -> SweepSummary {
    group(records)
        .into_iter()
        .map(|((radius_m, d_m), recs)| {
            let n = recs.len();
            let d_err: Vec<f64> = recs.iter().map(|r| r.range_error_m()).collect();
            let t_err: Vec<f64> = recs.iter().map(|r| r.angle_error_rad()).collect();
            let (rmse_d_m, rmse_d_se_m) = rms_with_se(&d_err);
            let (rmse_theta_rad, rmse_theta_se_rad) = rms_with_se(&t_err);
            SummaryRow {
                radius_m,
                d_m,
                rmse_d_m,
                rmse_d_se_m,
                rmse_theta_rad,
                rmse_theta_se_rad,
                crlb_d_m: mean(recs.iter().map(|r| r.crlb_var_d)).sqrt(),
                crlb_theta_rad: mean(recs.iter().map(|r| r.crlb_var_theta)).sqrt(),
                full_model_crlb_d_m: mean(recs.iter().map(|r| r.full_model_var_d)).sqrt(),
                convergence_rate: recs.iter().filter(|r| r.converged).count() as f64 / n as f64,
                success_rate: recs.iter().filter(|r| r.success).count() as f64 / n as f64,
                mean_snr_db: mean(recs.iter().map(|r| r.snr_db)),
                mean_rate_est_bps: mean(recs.iter().map(|r| r.rate_est_bps)),
                mean_rate_opt_bps: mean(recs.iter().map(|r| r.rate_opt_bps)),
                n_trials: n,
            }
        })
        .collect()
}

/// Monte Carlo RMSE against the bound for every (radius, distance).
pub fn rmse_sweep(config: &SweepConfig) -> Result<(SweepSummary, Vec<TrialRecord>)> {
    if config.trials_per_point < 2 {
        return Err(invalid("trials_per_point", "an RMSE sweep needs at least 2 trials"));
    }
    let records = run_trials(config)?;
    Ok((summarize(&records), records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub radius_m: f64,
    pub d_m: f64,
    pub mean_snr_db: f64,
    pub mean_rate_est_bps: f64,
    pub mean_rate_opt_bps: f64,
    pub n_trials: usize,
}

pub fn rate_table(records: &[TrialRecord]) -> Vec<RateRow> {
    summarize(records)
        .into_iter()
        .map(|s| RateRow {
            radius_m: s.radius_m,
            d_m: s.d_m,
            mean_snr_db: s.mean_snr_db,
            mean_rate_est_bps: s.mean_rate_est_bps,
            mean_rate_opt_bps: s.mean_rate_opt_bps,
            n_trials: s.n_trials,
        })
        .collect()
}

/// Rows whose optimal rate does not increase with SNR within their radius,
/// as `(radius, distance)` pairs.
pub fn rate_monotonicity_violations(rows: &[RateRow]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut radii: Vec<f64> = rows.iter().map(|r| r.radius_m).collect();
    radii.dedup();
    for radius in radii {
        let mut pts: Vec<&RateRow> = rows.iter().filter(|r| r.radius_m == radius).collect();
        pts.sort_by(|a, b| a.mean_snr_db.total_cmp(&b.mean_snr_db));
        for w in pts.windows(2) {
            if w[1].mean_rate_opt_bps < w[0].mean_rate_opt_bps {
                out.push((radius, w[1].d_m));
            }
        }
    }
    out
}

/// Achievable rates for every (radius, distance).
pub fn rate_sweep(config: &SweepConfig) -> Result<(Vec<RateRow>, Vec<TrialRecord>)> {
    let records = run_trials(config)?;
    let rows = rate_table(&records);
    for (r, d) in rate_monotonicity_violations(&rows) {
        log::warn!("optimal rate is not increasing in SNR at R = {r} m, d = {d} m");
    }
    Ok((rows, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub radius_m: f64,
    pub d_m: f64,
    pub theta_rad: f64,
    pub crlb_d_m: f64,
    pub crlb_theta_rad: f64,
    pub trace: f64,
    pub snr_db: f64,
    /// `None` for a regular point, otherwise the reason it has no bound.
    pub flag: Option<String>,
}

/// Closed-form bounds with the optimized beam; no Monte Carlo.
pub fn crlb_sweep(config: &SweepConfig) -> Result<Vec<BoundRow>> {
    config.validate()?;
    let theta = config.reference_theta();
    let settings = &config.trial;
    let mut points = Vec::new();
    for &r in &config.radii_m {
        for &d in &config.distances_m {
            points.push((r, d));
        }
    }
    points
        .par_iter()
        .map(|&(radius_m, d_m)| {
            let geom = settings.geometry(radius_m)?;
            let pos = PolarPosition::new(d_m, theta)?;
            let f = sensing_beam(&geom, &pos, settings)?;
            let snr_db = ue_received_snr(&geom, &pos, &f, &settings.ofdm)?.db();
            let row = match crlb_expanded(&geom, &pos, &f, &settings.ofdm) {
                Ok(b) => BoundRow {
                    radius_m,
                    d_m,
                    theta_rad: theta,
                    crlb_d_m: b.std_d_m(),
                    crlb_theta_rad: b.std_theta_rad(),
                    trace: b.trace,
                    snr_db,
                    flag: None,
                },
                Err(e) => BoundRow {
                    radius_m,
                    d_m,
                    theta_rad: theta,
                    crlb_d_m: f64::NAN,
                    crlb_theta_rad: f64::NAN,
                    trace: f64::NAN,
                    snr_db,
                    flag: Some(e.to_string()),
                },
            };
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(noise_free: bool) -> TrialSettings {
        TrialSettings {
            ofdm: OfdmConfig::reference_60ghz().with_subcarriers(32),
            grid: GridPolicy::Resolving {
                resolution: Resolution::default(),
                d_max_m: 30.0,
                n_basins: 15,
            },
            noise_free_echo: noise_free,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_trial_is_exact() {
        let rec = run_trial(0.5, 10.0, 0.7, &quick(true), 11);
        assert!(rec.error.is_none(), "{rec:?}");
        assert!(rec.range_error_m().abs() < 1e-6, "{rec:?}");
        assert!(rec.angle_error_rad() < 1e-8, "{rec:?}");
        assert!(rec.success);
        assert!(((rec.rate_est_bps - rec.rate_opt_bps) / rec.rate_opt_bps).abs() < 1e-6);
    }

    #[test]
    fn noiseless_link_designs_with_fallback() {
        let mut s = quick(false);
        s.ofdm = s.ofdm.with_noise(0.0);
        let rec = run_trial(0.5, 10.0, 0.7, &s, 3);
        assert!(rec.error.is_none(), "{rec:?}");
        assert!(rec.range_error_m().abs() < 1e-6);
        assert!(rec.snr_db.is_infinite());
        assert!(rec.crlb_var_d.is_nan());
    }

    #[test]
    fn trial_is_deterministic() {
        let a = run_trial(1.0, 12.0, 2.0, &quick(false), 5);
        let b = run_trial(1.0, 12.0, 2.0, &quick(false), 5);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_scenario_is_recorded() {
        let rec = run_trial(0.5, 0.4, 0.0, &quick(false), 1);
        assert!(rec.error.is_some());
        assert!(!rec.success && !rec.converged);
    }

    #[test]
    fn success_definition() {
        assert!(is_success(true, 0.49, 1.9f64.to_radians()));
        assert!(!is_success(false, 0.0, 0.0));
        assert!(!is_success(true, 0.5, 0.0));
        assert!(!is_success(true, 0.0, 2.0f64.to_radians()));
    }

    #[test]
    fn rms_and_se() {
        let (r, se) = rms_with_se(&[3.0, -3.0, 3.0, -3.0]);
        assert_eq!(r, 3.0);
        assert_eq!(se, 0.0);
        let (r, se) = rms_with_se(&[1.0, 3.0]);
        assert!((r - 5f64.sqrt()).abs() < 1e-15);
        // squares 1 and 9: sample variance 32, se of mse 4
        assert!((se - 4.0 / (2.0 * 5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn sweep_validation() {
        let mut c = SweepConfig {
            distances_m: vec![0.4],
            radii_m: vec![0.5],
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::PositionInsideArray { .. })));
        c.distances_m = vec![10.0];
        c.trials_per_point = 1;
        assert!(c.validate().is_ok());
        assert!(rmse_sweep(&c).is_err());
    }

    #[test]
    fn summary_groups_in_order() {
        let c = SweepConfig {
            radii_m: vec![0.5],
            distances_m: vec![10.0, 20.0],
            trials_per_point: 2,
            trial: quick(true),
            ..Default::default()
        };
        let (summary, records) = rmse_sweep(&c).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].d_m, 10.0);
        assert_eq!(summary[1].d_m, 20.0);
        for row in &summary {
            assert_eq!(row.n_trials, 2);
            assert!(row.rmse_d_m < 1e-6);
            assert_eq!(row.success_rate, 1.0);
            assert!(row.crlb_d_m > 0.0);
        }
    }

    #[test]
    fn monotonicity_check_flags_drops() {
        let row = |d: f64, snr: f64, c: f64| RateRow {
            radius_m: 1.0,
            d_m: d,
            mean_snr_db: snr,
            mean_rate_est_bps: 0.0,
            mean_rate_opt_bps: c,
            n_trials: 1,
        };
        assert!(rate_monotonicity_violations(&[row(10.0, 5.0, 2.0), row(20.0, 1.0, 1.0)]).is_empty());
        assert_eq!(
            rate_monotonicity_violations(&[row(10.0, 5.0, 1.0), row(20.0, 1.0, 2.0)]),
            vec![(1.0, 10.0)]
        );
    }
}
