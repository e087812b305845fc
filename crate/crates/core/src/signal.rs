//! Wideband OFDM sensing and communication signal model.
//!
//! The model works on post-DFT samples: for OFDM symbol `n`, subcarrier `m`
//! and receive element `k` the monostatic echo is
//!
//! ```text
//! r[n,m,k] = C[n,m] · g_k · a_k(d,θ) · β(d,θ) + noise,
//! C[n,m]   = x[n,m] · e^{j2πν₀ n T_o} · e^{−j2π m Δf (T_cp + τ₀)},   τ₀ = 2d/c,
//! β(d,θ)   = aᵀ(d,θ) f.
//! ```

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{PolarPosition, UcaGeometry, SPEED_OF_LIGHT};
use crate::linalg::{check_len, check_unit_norm, dot_t};
use crate::rng::rng_from_seed;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Round-trip delay `2d/c` of a monostatic echo.
pub fn round_trip_delay(d_m: f64) -> f64 {
    2.0 * d_m / SPEED_OF_LIGHT
}

/// OFDM numerology and link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub m_subcarriers: usize,
    pub n_symbols: usize,
    pub delta_f_hz: f64,
    pub t_cp_s: f64,
    /// Transmit power per resource element, watts.
    pub p_t_w: f64,
    /// Noise power per sample, watts.
    pub sigma2_w: f64,
    pub carrier_hz: f64,
    pub nu0_hz: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self::reference_60ghz()
    }
}

impl OfdmConfig {
    /// 60 GHz, 2048 × 480 kHz subcarriers, 14 symbols, 100 mW, −74 dBm noise.
    pub fn reference_60ghz() -> Self {
        let delta_f_hz = 480e3;
        Self {
            m_subcarriers: 2048,
            n_symbols: 14,
            delta_f_hz,
            t_cp_s: 0.07 / delta_f_hz,
            p_t_w: 0.1,
            sigma2_w: dbm_to_watts(-74.0),
            carrier_hz: 60e9,
            nu0_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_subcarriers == 0 {
            return Err(invalid("m_subcarriers", "must be at least 1"));
        }
        if self.n_symbols == 0 {
            return Err(invalid("n_symbols", "must be at least 1"));
        }
        if !(self.delta_f_hz.is_finite() && self.delta_f_hz > 0.0) {
            return Err(invalid("delta_f_hz", "must be positive"));
        }
        if !(self.t_cp_s.is_finite() && self.t_cp_s >= 0.0) {
            return Err(invalid("t_cp_s", "must be non-negative"));
        }
        if !(self.p_t_w.is_finite() && self.p_t_w > 0.0) {
            return Err(invalid("p_t_w", "must be positive"));
        }
        if !(self.sigma2_w.is_finite() && self.sigma2_w >= 0.0) {
            return Err(invalid("sigma2_w", "must be non-negative"));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(invalid("carrier_hz", "must be positive"));
        }
        if !self.nu0_hz.is_finite() || self.nu0_hz.abs() > self.delta_f_hz / 100.0 {
            return Err(invalid(
                "nu0_hz",
                format!(
                    "|ν₀| = {} Hz exceeds Δf/100 = {} Hz",
                    self.nu0_hz.abs(),
                    self.delta_f_hz / 100.0
                ),
            ));
        }
        Ok(())
    }

    /// `T_o = 1/Δf + T_cp`.
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.delta_f_hz + self.t_cp_s
    }

    /// `B = M Δf`.
    pub fn bandwidth_hz(&self) -> f64 {
        self.m_subcarriers as f64 * self.delta_f_hz
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Total pilot energy `N M P_t` of one slot.
    pub fn slot_energy(&self) -> f64 {
        (self.n_symbols * self.m_subcarriers) as f64 * self.p_t_w
    }

    pub fn with_subcarriers(mut self, m: usize) -> Self {
        self.m_subcarriers = m;
        self
    }

    pub fn with_power(mut self, p_t_w: f64) -> Self {
        self.p_t_w = p_t_w;
        self
    }

    pub fn with_noise(mut self, sigma2_w: f64) -> Self {
        self.sigma2_w = sigma2_w;
        self
    }

    /// Doppler phasor `e^{j2πν₀ n T_o}` of symbol `n`.
    pub(crate) fn doppler_phasor(&self, n: usize) -> Complex64 {
        Complex64::from_polar(1.0, TAU * self.nu0_hz * n as f64 * self.symbol_duration_s())
    }

    /// Delay phasor `e^{−j2π m Δf (T_cp + τ₀)}` of subcarrier `m`.
    pub(crate) fn delay_phasor(&self, m: usize, tau0_s: f64) -> Complex64 {
        Complex64::from_polar(
            1.0,
            -TAU * m as f64 * self.delta_f_hz * (self.t_cp_s + tau0_s),
        )
    }
}

/// Known pilot symbols `x[n,m]`, stored symbol-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotGrid {
    n_symbols: usize,
    m_subcarriers: usize,
    symbols: Vec<Complex64>,
}

impl PilotGrid {
    pub fn from_symbols(
        n_symbols: usize,
        m_subcarriers: usize,
        symbols: Vec<Complex64>,
    ) -> Result<Self> {
        check_len("pilot grid", n_symbols * m_subcarriers, symbols.len())?;
        Ok(Self {
            n_symbols,
            m_subcarriers,
            symbols,
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn m_subcarriers(&self) -> usize {
        self.m_subcarriers
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.symbols[n * self.m_subcarriers + m]
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    fn check_matches(&self, cfg: &OfdmConfig) -> Result<()> {
        check_len("pilot symbols", cfg.n_symbols, self.n_symbols)?;
        check_len("pilot subcarriers", cfg.m_subcarriers, self.m_subcarriers)
    }
}

/// Constant-modulus pilots with i.i.d. uniform phases; `|x|² = P_t`.
pub fn generate_pilots(cfg: &OfdmConfig, seed: u64) -> PilotGrid {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let amp = cfg.p_t_w.sqrt();
    let symbols = (0..cfg.n_symbols * cfg.m_subcarriers)
        .map(|_| Complex64::from_polar(amp, rng.gen_range(0.0..TAU)))
        .collect();
    PilotGrid {
        n_symbols: cfg.n_symbols,
        m_subcarriers: cfg.m_subcarriers,
        symbols,
    }
}

/// `C[n,m]` for a given round-trip delay.
pub fn phase_factor(
    cfg: &OfdmConfig,
    pilots: &PilotGrid,
    n: usize,
    m: usize,
    tau0_s: f64,
) -> Result<Complex64> {
    if n >= pilots.n_symbols || m >= pilots.m_subcarriers {
        return Err(invalid(
            "index",
            format!(
                "(n, m) = ({n}, {m}) outside {}×{} grid",
                pilots.n_symbols, pilots.m_subcarriers
            ),
        ));
    }
    Ok(pilots.get(n, m) * cfg.doppler_phasor(n) * cfg.delay_phasor(m, tau0_s))
}

/// Complex samples indexed by (symbol, subcarrier, element).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    n_symbols: usize,
    m_subcarriers: usize,
    n_elements: usize,
    data: Vec<Complex64>,
}

impl SampleTensor {
    pub fn zeros(n_symbols: usize, m_subcarriers: usize, n_elements: usize) -> Self {
        Self {
            n_symbols,
            m_subcarriers,
            n_elements,
            data: vec![Complex64::new(0.0, 0.0); n_symbols * m_subcarriers * n_elements],
        }
    }

    pub fn from_vec(
        n_symbols: usize,
        m_subcarriers: usize,
        n_elements: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        check_len("sample tensor", n_symbols * m_subcarriers * n_elements, data.len())?;
        Ok(Self {
            n_symbols,
            m_subcarriers,
            n_elements,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_symbols, self.m_subcarriers, self.n_elements)
    }

    #[inline]
    pub fn index(&self, n: usize, m: usize, k: usize) -> usize {
        (n * self.m_subcarriers + m) * self.n_elements + k
    }

    pub fn get(&self, n: usize, m: usize, k: usize) -> Complex64 {
        self.data[self.index(n, m, k)]
    }

    /// The `n_a` element samples of resource element `(n, m)`.
    pub fn element_slice(&self, n: usize, m: usize) -> &[Complex64] {
        let start = self.index(n, m, 0);
        &self.data[start..start + self.n_elements]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }
}

fn check_inputs(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<()> {
    cfg.validate()?;
    geom.check_position(pos)?;
    check_len("beamformer", geom.n_elements(), f.len())?;
    check_unit_norm(f)
}

/// Noise-free echo at the BS for a user at `pos` and transmit beamformer `f`.
pub fn noiseless_mean(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
    pilots: &PilotGrid,
) -> Result<SampleTensor> {
    check_inputs(geom, pos, f, cfg)?;
    pilots.check_matches(cfg)?;

    let a = geom.steering_vector(pos);
    let beta = dot_t(a.as_slice(), f);
    let sens = geom.sensitivities(pos);
    let element: Vec<Complex64> = a
        .as_slice()
        .iter()
        .zip(&sens.gains)
        .map(|(ak, gk)| ak * *gk * beta)
        .collect();

    let tau0 = round_trip_delay(pos.d_m);
    let delay: Vec<Complex64> = (0..cfg.m_subcarriers)
        .map(|m| cfg.delay_phasor(m, tau0))
        .collect();
    let n_a = geom.n_elements();
    let mut out = SampleTensor::zeros(cfg.n_symbols, cfg.m_subcarriers, n_a);
    for n in 0..cfg.n_symbols {
        let doppler = cfg.doppler_phasor(n);
        for (m, dm) in delay.iter().enumerate() {
            let c = pilots.get(n, m) * doppler * dm;
            let start = out.index(n, m, 0);
            for (slot, h) in out.data[start..start + n_a].iter_mut().zip(&element) {
                *slot = c * h;
            }
        }
    }
    Ok(out)
}

/// One sensing slot: received samples plus what the receiver knows about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub samples: SampleTensor,
    pub pilots: PilotGrid,
    pub config: OfdmConfig,
    pub beamformer: Vec<Complex64>,
}

impl Observation {
    pub fn new(
        samples: SampleTensor,
        pilots: PilotGrid,
        config: OfdmConfig,
        beamformer: Vec<Complex64>,
    ) -> Result<Self> {
        config.validate()?;
        pilots.check_matches(&config)?;
        let (n, m, k) = samples.dims();
        check_len("observation symbols", config.n_symbols, n)?;
        check_len("observation subcarriers", config.m_subcarriers, m)?;
        check_len("observation elements", beamformer.len(), k)?;
        check_unit_norm(&beamformer)?;
        Ok(Self {
            samples,
            pilots,
            config,
            beamformer,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.beamformer.len()
    }
}

/// Noise-free mean plus i.i.d. `CN(0, σ²)` noise drawn from `seed`.
pub fn synthesize_observation(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
    pilots: &PilotGrid,
    seed: u64,
) -> Result<Observation> {
    let mut samples = noiseless_mean(geom, pos, f, cfg, pilots)?;
    if cfg.sigma2_w > 0.0 {
        let std = (cfg.sigma2_w / 2.0).sqrt();
        let mut rng = rng_from_seed(seed);
        for s in samples.as_mut_slice() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *s += Complex64::new(re * std, im * std);
        }
    }
    Ok(Observation {
        samples,
        pilots: pilots.clone(),
        config: *cfg,
        beamformer: f.to_vec(),
    })
}

/// Downlink channel to the single-antenna user, `h_k = g_k a_k(d,θ)`.
pub fn comm_channel(geom: &UcaGeometry, pos: &PolarPosition) -> Vec<Complex64> {
    let a = geom.steering_vector(pos);
    let sens = geom.sensitivities(pos);
    a.as_slice()
        .iter()
        .zip(&sens.gains)
        .map(|(ak, gk)| ak * *gk)
        .collect()
}

/// Received SNR at the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedSnr {
    pub linear: f64,
}

impl ReceivedSnr {
    pub fn db(&self) -> f64 {
        10.0 * self.linear.log10()
    }
}

/// `P_t |hᵀf|² / σ²`: the user sees the beam through the same transposed
/// coupling `aᵀf` as the sensing echo.
pub fn ue_received_snr(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<ReceivedSnr> {
    check_inputs(geom, pos, f, cfg)?;
    let h = comm_channel(geom, pos);
    let coupling = dot_t(&h, f).norm_sqr();
    let linear = if cfg.sigma2_w > 0.0 {
        cfg.p_t_w * coupling / cfg.sigma2_w
    } else if coupling > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(ReceivedSnr { linear })
}

/// `B log₂(1 + SNR)` with the channel taken at the true user position.
pub fn achievable_rate(
    geom: &UcaGeometry,
    f: &[Complex64],
    cfg: &OfdmConfig,
    pos_true: &PolarPosition,
) -> Result<f64> {
    let snr = ue_received_snr(geom, pos_true, f, cfg)?;
    Ok(cfg.bandwidth_hz() * snr.linear.ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalized;

    fn small_cfg() -> OfdmConfig {
        OfdmConfig {
            m_subcarriers: 4,
            n_symbols: 2,
            ..OfdmConfig::reference_60ghz()
        }
    }

    #[test]
    fn reference_timing() {
        let cfg = OfdmConfig::reference_60ghz();
        assert!((cfg.t_cp_s - 145.833e-9).abs() < 1e-12);
        assert!((cfg.symbol_duration_s() - 2.229166e-6).abs() < 1e-11);
        assert!((cfg.bandwidth_hz() - 983.04e6).abs() < 1e-3);
        assert!((cfg.sigma2_w - 3.981e-11).abs() < 1e-14);
        assert!((watts_to_dbm(cfg.sigma2_w) + 74.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_contract() {
        let mut cfg = OfdmConfig::reference_60ghz();
        cfg.nu0_hz = 4800.0;
        assert!(cfg.validate().is_ok());
        cfg.nu0_hz = 4801.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pilots_constant_modulus_and_deterministic() {
        let cfg = small_cfg();
        let p = generate_pilots(&cfg, 11);
        let worst = p
            .symbols()
            .iter()
            .map(|x| (x.norm_sqr() - cfg.p_t_w).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 4.0 * f64::EPSILON * cfg.p_t_w);
        assert_eq!(p, generate_pilots(&cfg, 11));
        for s in 0..100 {
            assert_ne!(generate_pilots(&cfg, s), generate_pilots(&cfg, s + 1));
        }
    }

    #[test]
    fn phase_factor_cases() {
        let mut cfg = small_cfg();
        let p = generate_pilots(&cfg, 3);
        assert_eq!(phase_factor(&cfg, &p, 1, 0, 1e-7).unwrap(), p.get(1, 0));
        cfg.t_cp_s = 0.0;
        for n in 0..2 {
            for m in 0..4 {
                let c = phase_factor(&cfg, &p, n, m, 0.0).unwrap();
                assert!((c - p.get(n, m)).norm() < 1e-15);
            }
        }
        assert!(phase_factor(&cfg, &p, 2, 0, 0.0).is_err());
    }

    #[test]
    fn phase_factor_matches_scalar_angle() {
        let cfg = OfdmConfig::reference_60ghz();
        let p = generate_pilots(&cfg.with_subcarriers(2048), 5);
        let tau0 = 2.0 * 10.0 / SPEED_OF_LIGHT;
        let c = phase_factor(&cfg, &p, 0, 1, tau0).unwrap();
        let rel = c / p.get(0, 1);
        let expect = -2.0 * std::f64::consts::PI * 480e3 * (cfg.t_cp_s + tau0);
        assert!((rel - Complex64::from_polar(1.0, expect)).norm() < 1e-12);
        assert!((c.norm_sqr() - cfg.p_t_w).abs() < 1e-15);
    }

    #[test]
    fn mean_hand_expansion_one_resource_element() {
        let cfg = OfdmConfig {
            m_subcarriers: 1,
            n_symbols: 1,
            ..OfdmConfig::reference_60ghz()
        };
        let geom = UcaGeometry::new(2, 0.5, 0.005).unwrap();
        let pos = PolarPosition::new(3.0, 0.4).unwrap();
        let pilots = generate_pilots(&cfg, 1);
        let f = normalized(&[Complex64::new(0.3, -0.2), Complex64::new(-0.7, 0.1)]).unwrap();
        let mu = noiseless_mean(&geom, &pos, &f, &cfg, &pilots).unwrap();

        let lam = 0.005;
        let mut a = [Complex64::new(0.0, 0.0); 2];
        let mut g = [0.0; 2];
        for k in 0..2 {
            let psi = std::f64::consts::PI * k as f64;
            let r = (9.0 + 0.25 - 3.0 * (0.4 - psi).cos()).sqrt();
            a[k] = Complex64::from_polar(1.0 / 2f64.sqrt(), TAU * (3.0 - r) / lam);
            g[k] = lam / (4.0 * std::f64::consts::PI * r);
        }
        let beta = a[0] * f[0] + a[1] * f[1];
        let c = pilots.get(0, 0) * Complex64::from_polar(1.0, -TAU * 0.0 * 480e3);
        for k in 0..2 {
            let expect = c * g[k] * a[k] * beta;
            assert!((mu.get(0, 0, k) - expect).norm() < 1e-12 * expect.norm());
        }
    }

    #[test]
    fn conjugate_focus_gives_unit_beta_and_null_beam_gives_zero() {
        let cfg = small_cfg();
        let geom = UcaGeometry::new(4, 0.5, cfg.wavelength_m()).unwrap();
        let pos = PolarPosition::new(5.0, 1.0).unwrap();
        let pilots = generate_pilots(&cfg, 9);
        let a = geom.steering_vector(&pos);
        let f = a.conj();
        assert!((dot_t(a.as_slice(), &f) - 1.0).norm() < 1e-12);

        // f orthogonal (under the transposed product) to a
        let mut f0 = vec![Complex64::new(0.0, 0.0); 4];
        f0[0] = a.0[1];
        f0[1] = -a.0[0];
        let f0 = normalized(&f0).unwrap();
        let mu = noiseless_mean(&geom, &pos, &f0, &cfg, &pilots).unwrap();
        assert!(mu.as_slice().iter().all(|x| x.norm() < 1e-20));

        // a beam orthogonal to the downlink channel h = g ⊙ a
        let h = comm_channel(&geom, &pos);
        let mut fh = vec![Complex64::new(0.0, 0.0); 4];
        fh[2] = h[3];
        fh[3] = -h[2];
        let fh = normalized(&fh).unwrap();
        let snr = ue_received_snr(&geom, &pos, &fh, &cfg).unwrap();
        assert!(snr.linear < 1e-20);
        assert!(achievable_rate(&geom, &fh, &cfg, &pos).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_non_unit_beamformer() {
        let cfg = small_cfg();
        let geom = UcaGeometry::new(2, 0.5, 0.005).unwrap();
        let pos = PolarPosition::new(5.0, 1.0).unwrap();
        let pilots = generate_pilots(&cfg, 9);
        let f = vec![Complex64::new(1.0, 0.0); 2];
        assert!(noiseless_mean(&geom, &pos, &f, &cfg, &pilots).is_err());
    }

    #[test]
    fn zero_noise_synthesis_is_the_mean_and_seeded() {
        let cfg = small_cfg();
        let geom = UcaGeometry::new(4, 0.5, cfg.wavelength_m()).unwrap();
        let pos = PolarPosition::new(5.0, 1.0).unwrap();
        let pilots = generate_pilots(&cfg, 9);
        let f = geom.steering_vector(&pos).conj();
        let clean = noiseless_mean(&geom, &pos, &f, &cfg, &pilots).unwrap();
        let obs = synthesize_observation(&geom, &pos, &f, &cfg.with_noise(0.0), &pilots, 1).unwrap();
        assert_eq!(obs.samples, clean);
        let o1 = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, 77).unwrap();
        let o2 = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, 77).unwrap();
        assert_eq!(o1, o2);
    }

    #[test]
    fn snr_and_rate_scaling() {
        let cfg = OfdmConfig::reference_60ghz();
        let geom = UcaGeometry::new(64, 0.5, cfg.wavelength_m()).unwrap();
        let pos = PolarPosition::new(10.0, 0.0).unwrap();
        let f = geom.steering_vector(&pos).conj();
        let s1 = ue_received_snr(&geom, &pos, &f, &cfg).unwrap();
        let s2 = ue_received_snr(&geom, &pos, &f, &cfg.with_power(0.2)).unwrap();
        assert!((s2.linear / s1.linear - 2.0).abs() < 1e-12);

        // scalar accumulation of Σ g_k a_k f_k
        let lam = cfg.wavelength_m();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..64 {
            let psi = TAU * k as f64 / 64.0;
            let r = (100.0f64 + 0.25 - 10.0 * (0.0 - psi).cos()).sqrt();
            let ak = Complex64::from_polar(0.125, TAU * (10.0 - r) / lam);
            acc += lam / (4.0 * std::f64::consts::PI * r) * ak * f[k];
        }
        let expect = cfg.p_t_w * acc.norm_sqr() / cfg.sigma2_w;
        assert!((s1.linear - expect).abs() < 1e-10 * expect);

        // SNR = 1 gives exactly one bit per second per hertz
        let unit = cfg.with_noise(cfg.p_t_w * acc.norm_sqr());
        let rate = achievable_rate(&geom, &f, &unit, &pos).unwrap();
        assert!((rate - cfg.bandwidth_hz()).abs() < 1e-3);
    }
}
