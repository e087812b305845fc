//! Joint range–angle maximum-likelihood estimation.
//!
//! The receiver folds the observation once into a per-element, per-subcarrier
//! matched-filter bank `Z_k[m]`. Every candidate `(d, θ)` is then evaluated
//! from the bank in `O(n_a M)`: the candidate's round-trip delay re-phases the
//! subcarriers, and the steering, gain and beam coupling do the rest.
//!
//! The cost is the negative log-likelihood up to constants,
//! `L = ‖μ̄‖² − 2 Re{r̃ᴴμ̄}`, and the scores are `F = −½ ∇L`. Because the
//! delay phase of `C[n,m]` depends on the candidate range, `F_d` carries a
//! subcarrier-weighted term besides the amplitude/steering part.

mod grid;
mod lm;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::{coupling_from, gamma_coefficients};
use crate::error::Result;
use crate::geometry::{PolarPosition, UcaGeometry, SPEED_OF_LIGHT};
use crate::linalg::check_len;
use crate::signal::{round_trip_delay, Observation, OfdmConfig};

pub use grid::{coarse_grid_search, Basin, GridSpec, Resolution, RowSpacing};
pub use lm::{lm_refine, LmOutcome, LmSettings};

/// `Z_k[m] = Σ_n conj(x[n,m] e^{j2πν₀nT_o}) r̃[n,m,k]`, stored element-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilterBank {
    n_a: usize,
    m_subcarriers: usize,
    z: Vec<Complex64>,
    pilot_energy: f64,
}

impl MatchedFilterBank {
    pub fn n_elements(&self) -> usize {
        self.n_a
    }

    pub fn m_subcarriers(&self) -> usize {
        self.m_subcarriers
    }

    pub fn get(&self, k: usize, m: usize) -> Complex64 {
        self.z[k * self.m_subcarriers + m]
    }

    /// The `M` aggregates of element `k`.
    pub fn element(&self, k: usize) -> &[Complex64] {
        &self.z[k * self.m_subcarriers..(k + 1) * self.m_subcarriers]
    }

    /// `Σ_{n,m} |x[n,m]|²`.
    pub fn pilot_energy(&self) -> f64 {
        self.pilot_energy
    }
}

pub fn matched_filter_bank(obs: &Observation) -> MatchedFilterBank {
    let cfg = &obs.config;
    let (n_sym, m_sc, n_a) = obs.samples.dims();
    let mut z = vec![Complex64::new(0.0, 0.0); n_a * m_sc];
    let mut pilot_energy = 0.0;
    for n in 0..n_sym {
        let doppler = cfg.doppler_phasor(n);
        for m in 0..m_sc {
            let x = obs.pilots.get(n, m);
            pilot_energy += x.norm_sqr();
            let w = (x * doppler).conj();
            for (k, r) in obs.samples.element_slice(n, m).iter().enumerate() {
                z[k * m_sc + m] += w * r;
            }
        }
    }
    MatchedFilterBank {
        n_a,
        m_subcarriers: m_sc,
        z,
        pilot_energy,
    }
}

/// `e^{+j2π m Δf (T_cp + τ₀)}` for every subcarrier.
pub(crate) fn delay_weights(cfg: &OfdmConfig, d_m: f64) -> Vec<Complex64> {
    let tau0 = round_trip_delay(d_m);
    (0..cfg.m_subcarriers)
        .map(|m| cfg.delay_phasor(m, tau0).conj())
        .collect()
}

/// `S_k = Σ_m w_m Z_k[m]` for every element.
pub(crate) fn delay_sums(bank: &MatchedFilterBank, w: &[Complex64]) -> Vec<Complex64> {
    (0..bank.n_a)
        .map(|k| bank.element(k).iter().zip(w).map(|(z, w)| z * w).sum())
        .collect()
}

/// Matched-filter output `ξ_k = g_k a_k* Σ_m e^{j2πmΔf(T_cp+τ₀)} Z_k[m]`.
pub fn xi(
    candidate: &PolarPosition,
    bank: &MatchedFilterBank,
    geom: &UcaGeometry,
    cfg: &OfdmConfig,
) -> Result<Vec<Complex64>> {
    geom.check_position(candidate)?;
    check_len("bank elements", geom.n_elements(), bank.n_a)?;
    check_len("bank subcarriers", cfg.m_subcarriers, bank.m_subcarriers)?;
    let s = delay_sums(bank, &delay_weights(cfg, candidate.d_m));
    let a = geom.steering_vector(candidate);
    let g = geom.sensitivities(candidate).gains;
    Ok((0..geom.n_elements())
        .map(|k| g[k] * a.0[k].conj() * s[k])
        .collect())
}

/// Cost and scores at one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Terms {
    pub cost: f64,
    pub f_d: f64,
    pub f_theta: f64,
    /// `‖μ̄‖²` at the candidate.
    pub energy: f64,
}

/// Candidate evaluator bound to one observation.
pub(crate) struct Evaluator<'a> {
    geom: &'a UcaGeometry,
    cfg: &'a OfdmConfig,
    bank: &'a MatchedFilterBank,
    f: &'a [Complex64],
    /// `Σ|x|² / n_a`.
    e_per_element: f64,
    /// `ω_m = −4π m Δf / c`, the range derivative of the delay phase.
    omega: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(
        obs: &'a Observation,
        geom: &'a UcaGeometry,
        bank: &'a MatchedFilterBank,
    ) -> Result<Self> {
        check_len("observation elements", geom.n_elements(), obs.n_elements())?;
        check_len("bank elements", geom.n_elements(), bank.n_a)?;
        check_len(
            "bank subcarriers",
            obs.config.m_subcarriers,
            bank.m_subcarriers,
        )?;
        let cfg = &obs.config;
        let omega = (0..cfg.m_subcarriers)
            .map(|m| -4.0 * PI * m as f64 * cfg.delta_f_hz / SPEED_OF_LIGHT)
            .collect();
        Ok(Self {
            geom,
            cfg,
            bank,
            f: &obs.beamformer,
            e_per_element: bank.pilot_energy / geom.n_elements() as f64,
            omega,
        })
    }

    pub(crate) fn geom(&self) -> &UcaGeometry {
        self.geom
    }

    pub(crate) fn cost(&self, pos: &PolarPosition) -> f64 {
        let w = delay_weights(self.cfg, pos.d_m);
        let s = delay_sums(self.bank, &w);
        let a = self.geom.steering_vector(pos).0;
        let g = self.geom.sensitivities(pos).gains;
        let mut beta = Complex64::new(0.0, 0.0);
        let mut x = Complex64::new(0.0, 0.0);
        let mut p = 0.0;
        for k in 0..a.len() {
            beta += a[k] * self.f[k];
            x += g[k] * a[k] * s[k].conj();
            p += g[k] * g[k];
        }
        self.e_per_element * beta.norm_sqr() * p - 2.0 * (beta * x).re
    }

    pub(crate) fn terms(&self, pos: &PolarPosition) -> Terms {
        let w = delay_weights(self.cfg, pos.d_m);
        let n_a = self.geom.n_elements();
        let mut s = Vec::with_capacity(n_a);
        let mut s_omega = Vec::with_capacity(n_a);
        for k in 0..n_a {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut acc_w = Complex64::new(0.0, 0.0);
            for ((z, wm), om) in self.bank.element(k).iter().zip(&w).zip(&self.omega) {
                let t = z * wm;
                acc += t;
                acc_w += t * *om;
            }
            s.push(acc);
            s_omega.push(acc_w);
        }
        let a = self.geom.steering_vector(pos).0;
        let sens = self.geom.sensitivities(pos);
        let coupling = coupling_from(&a, &sens, self.f);
        let beta = coupling.beta;
        let gamma = gamma_coefficients(&sens, &coupling, self.geom.wavelength_m());

        let mut energy_sum = 0.0;
        let mut x = Complex64::new(0.0, 0.0);
        let mut x_omega = Complex64::new(0.0, 0.0);
        let mut f_d = 0.0;
        let mut f_theta = 0.0;
        for k in 0..n_a {
            let g = sens.gains[k];
            let ga = g * a[k];
            let xi = (ga * s[k].conj()).conj();
            let rho = xi - self.e_per_element * g * g * beta;
            energy_sum += g * g;
            x += ga * s[k].conj();
            x_omega += ga * s_omega[k].conj();
            f_d += (gamma.gamma_d[k].conj() * rho).re;
            f_theta += (gamma.gamma_theta[k].conj() * rho).re;
        }
        f_d += (Complex64::i() * beta * x_omega).re;
        let energy = self.e_per_element * beta.norm_sqr() * energy_sum;
        Terms {
            cost: energy - 2.0 * (beta * x).re,
            f_d,
            f_theta,
            energy,
        }
    }
}

/// Negative log-likelihood `‖μ̄‖² − 2 Re{r̃ᴴμ̄}` at `candidate`.
pub fn cost(
    candidate: &PolarPosition,
    obs: &Observation,
    geom: &UcaGeometry,
    bank: &MatchedFilterBank,
) -> Result<f64> {
    geom.check_position(candidate)?;
    Ok(Evaluator::new(obs, geom, bank)?.cost(candidate))
}

/// Scores `(F_d, F_θ) = Re{(r̃ − μ̄)ᴴ ∂μ̄/∂η}`, equal to `−½ ∇L`.
pub fn scores(
    candidate: &PolarPosition,
    obs: &Observation,
    geom: &UcaGeometry,
    bank: &MatchedFilterBank,
) -> Result<(f64, f64)> {
    geom.check_position(candidate)?;
    let t = Evaluator::new(obs, geom, bank)?.terms(candidate);
    Ok((t.f_d, t.f_theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    pub d_hat_m: f64,
    pub theta_hat_rad: f64,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Rank of the grid basin whose refinement won.
    pub basin_index: usize,
}

impl MlEstimate {
    pub fn position(&self) -> PolarPosition {
        PolarPosition {
            d_m: self.d_hat_m,
            theta_rad: self.theta_hat_rad,
        }
    }
}

/// Bank, grid search, refinement of every basin, lowest-cost winner.
pub fn estimate(
    obs: &Observation,
    geom: &UcaGeometry,
    spec: &GridSpec,
    lm: &LmSettings,
) -> Result<MlEstimate> {
    let bank = matched_filter_bank(obs);
    let basins = coarse_grid_search(obs, geom, &bank, spec)?;
    let settings = LmSettings {
        d_upper_m: lm.d_upper_m.or(Some(1.5 * spec.d_max_m)),
        ..*lm
    };
    let eval = Evaluator::new(obs, geom, &bank)?;
    let refined: Vec<(usize, LmOutcome, f64)> = basins
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let out = lm::refine_with(&eval, &b.position, &settings);
            let c = eval.cost(&out.position);
            (i, out, c)
        })
        .collect();
    let best = refined
        .into_iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    Ok(match best {
        Some((i, out, c)) => MlEstimate {
            d_hat_m: out.position.d_m,
            theta_hat_rad: out.position.theta_rad,
            cost: c,
            converged: out.converged,
            iterations: out.iterations,
            basin_index: i,
        },
        None => MlEstimate {
            d_hat_m: spec.d_min_m,
            theta_hat_rad: 0.0,
            cost: f64::NAN,
            converged: false,
            iterations: 0,
            basin_index: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::{conjugate_focus_beamformer, random_unit_vector};
    use crate::signal::{generate_pilots, phase_factor, synthesize_observation, SampleTensor};

    fn toy(seed: u64, noise: f64) -> (UcaGeometry, OfdmConfig, Observation, PolarPosition) {
        let cfg = OfdmConfig {
            n_symbols: 2,
            m_subcarriers: 4,
            ..OfdmConfig::reference_60ghz()
        }
        .with_noise(noise);
        let geom = UcaGeometry::new(4, 0.05, cfg.wavelength_m()).unwrap();
        let pos = PolarPosition::new(3.0, 0.9).unwrap();
        let f = random_unit_vector(4, seed);
        let pilots = generate_pilots(&cfg, seed + 1);
        let obs = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, seed + 2).unwrap();
        (geom, cfg, obs, pos)
    }

    /// `μ̄` at a candidate, summed sample by sample with its own delay.
    fn brute_mean(
        geom: &UcaGeometry,
        cfg: &OfdmConfig,
        obs: &Observation,
        pos: &PolarPosition,
    ) -> Vec<Complex64> {
        let lam = geom.wavelength_m();
        let n_a = geom.n_elements();
        let mut beta = Complex64::new(0.0, 0.0);
        let mut h = vec![Complex64::new(0.0, 0.0); n_a];
        for k in 0..n_a {
            let psi = 2.0 * PI * k as f64 / n_a as f64;
            let (ex, ey) = (geom.radius_m() * psi.cos(), geom.radius_m() * psi.sin());
            let (ux, uy) = (pos.d_m * pos.theta_rad.cos(), pos.d_m * pos.theta_rad.sin());
            let r = ((ux - ex).powi(2) + (uy - ey).powi(2)).sqrt();
            let a = Complex64::from_polar(1.0 / (n_a as f64).sqrt(), 2.0 * PI * (pos.d_m - r) / lam);
            beta += a * obs.beamformer[k];
            h[k] = a * (lam / (4.0 * PI * r));
        }
        let tau0 = 2.0 * pos.d_m / SPEED_OF_LIGHT;
        let mut out = Vec::new();
        for n in 0..cfg.n_symbols {
            for m in 0..cfg.m_subcarriers {
                let c = phase_factor(cfg, &obs.pilots, n, m, tau0).unwrap();
                for hk in &h {
                    out.push(c * hk * beta);
                }
            }
        }
        out
    }

    fn brute_cost(
        geom: &UcaGeometry,
        cfg: &OfdmConfig,
        obs: &Observation,
        pos: &PolarPosition,
    ) -> f64 {
        let mu = brute_mean(geom, cfg, obs, pos);
        let r = obs.samples.as_slice();
        let resid: f64 = r.iter().zip(&mu).map(|(x, m)| (x - m).norm_sqr()).sum();
        resid - obs.samples.energy()
    }

    #[test]
    fn bank_single_symbol_and_zero_cases() {
        let (geom, cfg, obs, _) = toy(1, 1e-9);
        let bank = matched_filter_bank(&obs);
        for k in 0..4 {
            for m in 0..4 {
                let mut direct = Complex64::new(0.0, 0.0);
                for n in 0..2 {
                    direct += obs.pilots.get(n, m).conj() * obs.samples.get(n, m, k);
                }
                assert!((bank.get(k, m) - direct).norm() <= 1e-15 * direct.norm().max(1e-30));
            }
        }
        let zero = Observation {
            samples: SampleTensor::zeros(2, 4, 4),
            ..obs.clone()
        };
        let zb = matched_filter_bank(&zero);
        assert!((0..4).all(|k| zb.element(k).iter().all(|z| z.norm() == 0.0)));
        let cand = PolarPosition::new(4.0, 0.1).unwrap();
        assert!(xi(&cand, &zb, &geom, &cfg).unwrap().iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn xi_at_truth_collapses_without_noise() {
        let (geom, cfg, obs, pos) = toy(3, 0.0);
        let bank = matched_filter_bank(&obs);
        let x = xi(&pos, &bank, &geom, &cfg).unwrap();
        let beta = crate::linalg::dot_t(geom.steering_vector(&pos).as_slice(), &obs.beamformer);
        let lam = geom.wavelength_m();
        for (k, r) in geom.element_ranges(&pos).iter().enumerate() {
            let expect = cfg.slot_energy() * lam * lam / (16.0 * PI * PI * r * r * 4.0) * beta;
            assert!((x[k] - expect).norm() < 1e-9 * expect.norm(), "k={k}");
        }
    }

    #[test]
    fn cost_matches_brute_force_residual() {
        for seed in 0..10 {
            let (geom, cfg, obs, pos) = toy(seed, 1e-9);
            let bank = matched_filter_bank(&obs);
            for cand in [
                pos,
                PolarPosition::new(2.5, 1.3).unwrap(),
                PolarPosition::new(7.0, 5.0).unwrap(),
            ] {
                let c = cost(&cand, &obs, &geom, &bank).unwrap();
                let b = brute_cost(&geom, &cfg, &obs, &cand);
                assert!((c - b).abs() < 1e-8 * b.abs().max(obs.samples.energy()), "{c} {b}");
            }
        }
    }

    #[test]
    fn zero_noise_cost_at_truth_is_negative_energy() {
        let (geom, _, obs, pos) = toy(4, 0.0);
        let bank = matched_filter_bank(&obs);
        let c = cost(&pos, &obs, &geom, &bank).unwrap();
        let e = obs.samples.energy();
        assert!((c + e).abs() < 1e-12 * e);
        let theta2 = PolarPosition::new(pos.d_m, pos.theta_rad + 2.0 * PI).unwrap();
        assert_eq!(c, cost(&theta2, &obs, &geom, &bank).unwrap());
    }

    #[test]
    fn beam_null_gives_zero_cost() {
        let (geom, _, mut obs, _) = toy(5, 1e-9);
        let cand = PolarPosition::new(4.0, 2.0).unwrap();
        let a = geom.steering_vector(&cand);
        let mut f = vec![Complex64::new(0.0, 0.0); 4];
        f[0] = a.0[1];
        f[1] = -a.0[0];
        obs.beamformer = crate::linalg::normalized(&f).unwrap();
        let bank = matched_filter_bank(&obs);
        assert!(cost(&cand, &obs, &geom, &bank).unwrap().abs() < 1e-25);
    }

    #[test]
    fn scores_vanish_at_truth_without_noise() {
        let cfg = OfdmConfig::reference_60ghz().with_subcarriers(32).with_noise(0.0);
        let geom = UcaGeometry::new(16, 0.5, cfg.wavelength_m()).unwrap();
        let pos = PolarPosition::new(10.0, 0.7).unwrap();
        let f = conjugate_focus_beamformer(&geom, &pos);
        let pilots = generate_pilots(&cfg, 2);
        let obs = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, 0).unwrap();
        let bank = matched_filter_bank(&obs);
        let ev = Evaluator::new(&obs, &geom, &bank).unwrap();
        let t = ev.terms(&pos);
        let lam = geom.wavelength_m();
        assert!(t.f_d.abs() * lam < 1e-9 * t.energy);
        assert!(t.f_theta.abs() * lam / 0.5 < 1e-9 * t.energy);
    }

    #[test]
    fn scores_are_half_negative_cost_gradient() {
        for seed in 0..6 {
            let (geom, _, obs, _) = toy(10 + seed, 1e-10);
            let bank = matched_filter_bank(&obs);
            let cand = PolarPosition::new(3.0 + 0.01 * seed as f64, 0.9 + 0.003).unwrap();
            let (fd_, ft) = scores(&cand, &obs, &geom, &bank).unwrap();
            let c = |d: f64, t: f64| cost(&PolarPosition::new(d, t).unwrap(), &obs, &geom, &bank).unwrap();
            let (hd, ht) = (1e-6, 1e-7);
            let gd = (c(cand.d_m + hd, cand.theta_rad) - c(cand.d_m - hd, cand.theta_rad)) / (2.0 * hd);
            let gt = (c(cand.d_m, cand.theta_rad + ht) - c(cand.d_m, cand.theta_rad - ht)) / (2.0 * ht);
            assert!((-0.5 * gd - fd_).abs() < 1e-5 * fd_.abs().max(1e-3 * gd.abs()), "{gd} {fd_}");
            assert!((-0.5 * gt - ft).abs() < 1e-5 * ft.abs().max(1e-3 * gt.abs()), "{gt} {ft}");
        }
    }
}
