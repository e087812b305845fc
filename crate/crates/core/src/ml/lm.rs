//! Levenberg–Marquardt refinement of a grid basin.
//!
//! The curvature model is `H = −2 ∂F/∂η`, built from central differences of
//! the analytic scores and symmetrized; the gradient is `−2F`. Damping adds
//! `λ·diag|H|`.

use serde::{Deserialize, Serialize};

use super::{Evaluator, MatchedFilterBank};
use crate::error::{invalid, Result};
use crate::geometry::{wrap_angle, PolarPosition, UcaGeometry};
use crate::signal::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub max_iters: usize,
    pub lambda_init: f64,
    /// Damping multiplier on rejection, divisor on acceptance.
    pub lambda_factor: f64,
    pub fd_step_d_m: f64,
    pub fd_step_theta_rad: f64,
    pub step_tol_d_m: f64,
    pub step_tol_theta_rad: f64,
    /// Bound on `max(|F_d| λ, |F_θ| λ/R) / (|L| + ‖μ̄‖²)`.
    pub score_tol: f64,
    /// Upper clamp for the range; `estimate` fills in `1.5·d_max` when unset.
    pub d_upper_m: Option<f64>,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            fd_step_d_m: 1e-4,
            fd_step_theta_rad: 1e-5,
            step_tol_d_m: 1e-7,
            step_tol_theta_rad: 1e-9,
            score_tol: 1e-10,
            d_upper_m: None,
        }
    }
}

impl LmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init > 0.0) {
            return Err(invalid("lambda_init", "must be positive"));
        }
        if !(self.lambda_factor > 1.0) {
            return Err(invalid("lambda_factor", "must exceed 1"));
        }
        if !(self.fd_step_d_m > 0.0 && self.fd_step_theta_rad > 0.0) {
            return Err(invalid("fd_step", "must be positive"));
        }
        if !(self.step_tol_d_m > 0.0 && self.step_tol_theta_rad > 0.0 && self.score_tol > 0.0) {
            return Err(invalid("tolerances", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOutcome {
    pub position: PolarPosition,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
}

/// Damping above which the iteration is considered stalled.
const LAMBDA_MAX: f64 = 1e16;

/// Relative cost band treated as indistinguishable from round-off.
const ROUNDING_BAND: f64 = 1e-13;

pub fn lm_refine(
    basin: &PolarPosition,
    obs: &Observation,
    geom: &UcaGeometry,
    bank: &MatchedFilterBank,
    lm: &LmSettings,
) -> Result<LmOutcome> {
    lm.validate()?;
    geom.check_position(basin)?;
    let eval = Evaluator::new(obs, geom, bank)?;
    Ok(refine_with(&eval, basin, lm))
}

pub(crate) fn refine_with(eval: &Evaluator<'_>, start: &PolarPosition, lm: &LmSettings) -> LmOutcome {
    let geom = eval.geom();
    let d_lo = geom.radius_m() * (1.0 + 1e-6);
    let d_hi = lm.d_upper_m.unwrap_or(f64::INFINITY);
    let clamp = |d: f64, t: f64| PolarPosition {
        d_m: d.clamp(d_lo, d_hi),
        theta_rad: wrap_angle(t),
    };
    let lam_w = geom.wavelength_m();
    let aperture = geom.radius_m();

    let mut p = clamp(start.d_m, start.theta_rad);
    let mut t = eval.terms(&p);
    let mut damping = lm.lambda_init;
    let mut iterations = 0;
    let mut converged = false;

    let scaled_score = |t: &super::Terms| (t.f_d.abs() * lam_w).max(t.f_theta.abs() * lam_w / aperture);
    let score_small = |t: &super::Terms| scaled_score(t) <= lm.score_tol * (t.cost.abs() + t.energy);

    'outer: while iterations < lm.max_iters {
        iterations += 1;
        let jac = score_jacobian(eval, &p, lm, d_lo);
        let h00 = -2.0 * jac[0][0];
        let h11 = -2.0 * jac[1][1];
        let h01 = -(jac[0][1] + jac[1][0]);
        let g = [-2.0 * t.f_d, -2.0 * t.f_theta];
        // A tiny Newton step at positive curvature is a minimum even when the
        // score sits above its tolerance on rounding noise.
        let det0 = h00 * h11 - h01 * h01;
        if h00 > 0.0 && h11 > 0.0 && det0 > 0.0 {
            let newton_d = -(h11 * g[0] - h01 * g[1]) / det0;
            let newton_t = -(h00 * g[1] - h01 * g[0]) / det0;
            if newton_d.abs() < lm.step_tol_d_m && newton_t.abs() < lm.step_tol_theta_rad {
                let cand = clamp(p.d_m + newton_d, p.theta_rad + newton_t);
                let tc = eval.terms(&cand);
                if tc.cost <= t.cost + ROUNDING_BAND * (t.cost.abs() + t.energy) {
                    p = cand;
                    t = tc;
                }
                converged = true;
                break;
            }
        }
        loop {
            let a00 = h00 + damping * h00.abs();
            let a11 = h11 + damping * h11.abs();
            let det = a00 * a11 - h01 * h01;
            if !(a00 > 0.0 && a11 > 0.0 && det > 0.0) || !det.is_finite() {
                damping *= lm.lambda_factor;
                if damping > LAMBDA_MAX {
                    break 'outer;
                }
                continue;
            }
            let step_d = -(a11 * g[0] - h01 * g[1]) / det;
            let step_t = -(a00 * g[1] - h01 * g[0]) / det;
            let small = step_d.abs() < lm.step_tol_d_m && step_t.abs() < lm.step_tol_theta_rad;
            if small && score_small(&t) {
                converged = true;
                break 'outer;
            }
            let cand = clamp(p.d_m + step_d, p.theta_rad + step_t);
            let c = eval.cost(&cand);
            if c < t.cost {
                p = cand;
                t = eval.terms(&p);
                damping = (damping / lm.lambda_factor).max(1e-15);
                break;
            }
            // Near the optimum the cost change drops below its rounding
            // floor; fall back to the score norm as the merit.
            if (c - t.cost).abs() <= ROUNDING_BAND * (t.cost.abs() + t.energy) {
                let tc = eval.terms(&cand);
                if scaled_score(&tc) < scaled_score(&t) {
                    p = cand;
                    t = tc;
                    damping = (damping / lm.lambda_factor).max(1e-15);
                    break;
                }
            }
            damping *= lm.lambda_factor;
            if damping > LAMBDA_MAX {
                break 'outer;
            }
        }
    }
    LmOutcome {
        position: p,
        converged,
        iterations,
        cost: t.cost,
    }
}

/// `∂(F_d, F_θ)/∂(d, θ)` by central differences (forward at the range floor).
fn score_jacobian(
    eval: &Evaluator<'_>,
    p: &PolarPosition,
    lm: &LmSettings,
    d_lo: f64,
) -> [[f64; 2]; 2] {
    let hd = lm.fd_step_d_m;
    let ht = lm.fd_step_theta_rad;
    let at = |d: f64, th: f64| {
        let t = eval.terms(&PolarPosition {
            d_m: d,
            theta_rad: th,
        });
        [t.f_d, t.f_theta]
    };
    let (dp, dm, span) = if p.d_m - hd > d_lo {
        (p.d_m + hd, p.d_m - hd, 2.0 * hd)
    } else {
        (p.d_m + hd, p.d_m, hd)
    };
    let fdp = at(dp, p.theta_rad);
    let fdm = at(dm, p.theta_rad);
    let ftp = at(p.d_m, p.theta_rad + ht);
    let ftm = at(p.d_m, p.theta_rad - ht);
    [
        [(fdp[0] - fdm[0]) / span, (ftp[0] - ftm[0]) / (2.0 * ht)],
        [(fdp[1] - fdm[1]) / span, (ftp[1] - ftm[1]) / (2.0 * ht)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::conjugate_focus_beamformer;
    use crate::ml::matched_filter_bank;
    use crate::signal::{generate_pilots, synthesize_observation, OfdmConfig};

    fn scene(radius: f64, pos: PolarPosition, noise: f64) -> (UcaGeometry, Observation) {
        let cfg = OfdmConfig::reference_60ghz().with_subcarriers(64).with_noise(noise);
        let geom = UcaGeometry::new(64, radius, cfg.wavelength_m()).unwrap();
        let f = conjugate_focus_beamformer(&geom, &pos);
        let pilots = generate_pilots(&cfg, 8);
        let obs = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, 3).unwrap();
        (geom, obs)
    }

    #[test]
    fn zero_noise_recovery_from_offset() {
        let truth = PolarPosition::new(10.0, 0.7).unwrap();
        let (geom, obs) = scene(0.5, truth, 0.0);
        let bank = matched_filter_bank(&obs);
        let start = PolarPosition::new(10.01, 0.701).unwrap();
        let out = lm_refine(&start, &obs, &geom, &bank, &LmSettings::default()).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.position.d_m - 10.0).abs() < 1e-6, "{out:?}");
        assert!((out.position.theta_rad - 0.7).abs() < 1e-8, "{out:?}");
    }

    #[test]
    fn zero_budget_returns_basin() {
        let truth = PolarPosition::new(10.0, 0.7).unwrap();
        let (geom, obs) = scene(0.5, truth, 0.0);
        let bank = matched_filter_bank(&obs);
        let start = PolarPosition::new(10.01, 0.701).unwrap();
        let lm = LmSettings {
            max_iters: 0,
            ..Default::default()
        };
        let out = lm_refine(&start, &obs, &geom, &bank, &lm).unwrap();
        assert_eq!(out.position, start);
        assert!(!out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn noisy_local_minimum_converges() {
        let truth = PolarPosition::new(10.0, 0.7).unwrap();
        let cfg_noise = OfdmConfig::reference_60ghz().sigma2_w * 1e3;
        let (geom, obs) = scene(0.5, truth, cfg_noise);
        let bank = matched_filter_bank(&obs);
        let start = PolarPosition::new(10.003, 0.7002).unwrap();
        let out = lm_refine(&start, &obs, &geom, &bank, &LmSettings::default()).unwrap();
        assert!(out.converged, "{out:?}");
        let c0 = crate::ml::cost(&start, &obs, &geom, &bank).unwrap();
        assert!(out.cost <= c0);
    }
}
