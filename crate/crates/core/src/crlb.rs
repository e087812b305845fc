//! Fisher information and Cramér–Rao bounds for joint range–angle estimation.
//!
//! Two evaluation paths are provided: assembling the 2×2 FIM from the
//! per-element derivative coefficients and inverting it, and the expanded
//! closed form built from nine geometry sums. They must agree to round-off.
//!
//! The bound treats the pilot phase factor `C[n,m]` as known, so only the
//! amplitude, steering and beam-coupling terms carry information about
//! `(d, θ)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{GeometrySensitivities, PolarPosition, UcaGeometry};
use crate::linalg::{check_len, check_unit_norm};
use crate::signal::OfdmConfig;

/// Relative determinant threshold below which the FIM is declared singular.
pub const EPS_DET: f64 = 1e-12;

/// Transposed beam couplings `β = aᵀf`, `z^d = aᵀD^d f`, `z^θ = aᵀD^θ f`.
///
/// Because the products are not conjugated, the beam that focuses on a
/// position is `f = a*`, not `f = a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamCoupling {
    pub beta: Complex64,
    pub z_d: Complex64,
    pub z_theta: Complex64,
}

pub(crate) fn coupling_from(
    a: &[Complex64],
    sens: &GeometrySensitivities,
    f: &[Complex64],
) -> BeamCoupling {
    let mut beta = Complex64::new(0.0, 0.0);
    let mut z_d = Complex64::new(0.0, 0.0);
    let mut z_theta = Complex64::new(0.0, 0.0);
    for k in 0..a.len() {
        let af = a[k] * f[k];
        beta += af;
        z_d += af * sens.one_minus_alpha_d[k];
        z_theta += af * sens.alpha_theta[k];
    }
    BeamCoupling {
        beta,
        z_d,
        z_theta,
    }
}

pub fn beam_coupling(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
) -> Result<BeamCoupling> {
    geom.check_position(pos)?;
    check_len("beamformer", geom.n_elements(), f.len())?;
    check_unit_norm(f)?;
    let a = geom.steering_vector(pos);
    Ok(coupling_from(a.as_slice(), &geom.sensitivities(pos), f))
}

/// Per-element derivative coefficients: `∂(g_k a_k β)/∂η = g_k a_k γ_k^η`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCoefficients {
    pub gamma_d: Vec<Complex64>,
    pub gamma_theta: Vec<Complex64>,
}

pub fn gamma_coefficients(
    sens: &GeometrySensitivities,
    coupling: &BeamCoupling,
    wavelength_m: f64,
) -> GammaCoefficients {
    let k0 = 2.0 * PI / wavelength_m;
    let j = Complex64::i();
    let beta = coupling.beta;
    let n = sens.len();
    let mut gamma_d = Vec::with_capacity(n);
    let mut gamma_theta = Vec::with_capacity(n);
    for k in 0..n {
        let r = sens.ranges_m[k];
        let ad = sens.alpha_d[k];
        let at = sens.alpha_theta[k];
        gamma_d.push(
            -(ad / r) * beta + j * k0 * (coupling.z_d + beta * sens.one_minus_alpha_d[k]),
        );
        gamma_theta.push(-(at / r) * beta - j * k0 * (coupling.z_theta + beta * at));
    }
    GammaCoefficients {
        gamma_d,
        gamma_theta,
    }
}

/// Symmetric 2×2 Fisher information for `η = [d, θ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub j_dd: f64,
    pub j_dtheta: f64,
    pub j_thetatheta: f64,
}

impl FisherMatrix {
    pub fn det(&self) -> f64 {
        self.j_dd * self.j_thetatheta - self.j_dtheta * self.j_dtheta
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            j_dd: self.j_dd * s,
            j_dtheta: self.j_dtheta * s,
            j_thetatheta: self.j_thetatheta * s,
        }
    }
}

/// `K = 2 N M P_t λ² / (16 π² σ² n_a)`, the common FIM prefactor.
pub fn fisher_scale(cfg: &OfdmConfig, n_a: usize, wavelength_m: f64) -> Result<f64> {
    if !(cfg.sigma2_w > 0.0) {
        return Err(invalid("sigma2_w", "Fisher information needs positive noise power"));
    }
    Ok(2.0 * cfg.slot_energy() * wavelength_m * wavelength_m
        / (16.0 * PI * PI * cfg.sigma2_w * n_a as f64))
}

/// `Re Σ_k conj(γ^i_k) γ^j_k / r_k²`, i.e. the FIM divided by `K`.
pub(crate) fn unit_fim(sens: &GeometrySensitivities, gamma: &GammaCoefficients) -> FisherMatrix {
    let mut out = FisherMatrix {
        j_dd: 0.0,
        j_dtheta: 0.0,
        j_thetatheta: 0.0,
    };
    for k in 0..sens.len() {
        let w = 1.0 / (sens.ranges_m[k] * sens.ranges_m[k]);
        let gd = gamma.gamma_d[k];
        let gt = gamma.gamma_theta[k];
        out.j_dd += gd.norm_sqr() * w;
        out.j_thetatheta += gt.norm_sqr() * w;
        out.j_dtheta += (gd.conj() * gt).re * w;
    }
    out
}

pub fn fim(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<FisherMatrix> {
    cfg.validate()?;
    let coupling = beam_coupling(geom, pos, f)?;
    let sens = geom.sensitivities(pos);
    let gamma = gamma_coefficients(&sens, &coupling, geom.wavelength_m());
    let k = fisher_scale(cfg, geom.n_elements(), geom.wavelength_m())?;
    Ok(unit_fim(&sens, &gamma).scaled(k))
}

/// FIM of the full echo model, where the subcarrier delay phase
/// `e^{−j2πmΔf(T_cp + 2d/c)}` also depends on `d`.
///
/// The delay term shifts the `d` derivative of sample `m` by `−jω_m β`
/// with `ω_m = 4πmΔf/c`, so only the first two moments of `ω_m` enter. Because
/// the steering phase grows with `d` while the delay phase falls, the two
/// partly cancel and this bound on `d` is looser than [`fim`]'s.
pub fn fim_full_model(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<FisherMatrix> {
    cfg.validate()?;
    let coupling = beam_coupling(geom, pos, f)?;
    let sens = geom.sensitivities(pos);
    let gamma = gamma_coefficients(&sens, &coupling, geom.wavelength_m());
    let k = fisher_scale(cfg, geom.n_elements(), geom.wavelength_m())?;
    let m = cfg.m_subcarriers as f64;
    let w1 = 4.0 * PI * cfg.delta_f_hz / crate::geometry::SPEED_OF_LIGHT;
    let mean_w = w1 * (m - 1.0) / 2.0;
    let mean_w2 = w1 * w1 * (m - 1.0) * (2.0 * m - 1.0) / 6.0;
    let beta = coupling.beta;
    let mut out = unit_fim(&sens, &gamma);
    for i in 0..sens.len() {
        let w = 1.0 / (sens.ranges_m[i] * sens.ranges_m[i]);
        let gd = gamma.gamma_d[i];
        let gt = gamma.gamma_theta[i];
        out.j_dd += w * (mean_w2 * beta.norm_sqr() + 2.0 * mean_w * (gd.conj() * beta).im);
        out.j_dtheta -= w * mean_w * (beta.conj() * gt).im;
    }
    Ok(out.scaled(k))
}

/// Per-parameter variance bounds (m², rad²) and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbBound {
    pub var_d: f64,
    pub var_theta: f64,
    pub trace: f64,
}

impl CrlbBound {
    pub fn std_d_m(&self) -> f64 {
        self.var_d.sqrt()
    }

    pub fn std_theta_rad(&self) -> f64 {
        self.var_theta.sqrt()
    }

    pub fn std_theta_deg(&self) -> f64 {
        self.var_theta.sqrt().to_degrees()
    }
}

fn bound_from_parts(r: f64, t: f64, x: f64) -> Result<CrlbBound> {
    let det = r * t - x * x;
    let scale = r * t;
    if !(r > 0.0 && t > 0.0) || !(det > EPS_DET * scale) || !det.is_finite() {
        return Err(Error::Unidentifiable { det, scale });
    }
    let var_d = t / det;
    let var_theta = r / det;
    Ok(CrlbBound {
        var_d,
        var_theta,
        trace: var_d + var_theta,
    })
}

pub fn crlb_from_fim(fim: &FisherMatrix) -> Result<CrlbBound> {
    bound_from_parts(fim.j_dd, fim.j_thetatheta, fim.j_dtheta)
}

/// The nine geometry/beam sums of the expanded bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySums {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub fn geometry_sums(
    sens: &GeometrySensitivities,
    coupling: &BeamCoupling,
    _wavelength_m: f64,
) -> GeometrySums {
    let BeamCoupling {
        beta,
        z_d,
        z_theta,
    } = *coupling;
    let (br, bi) = (beta.re, beta.im);
    let mut s = GeometrySums {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
        b1: 0.0,
        b2: 0.0,
        b3: 0.0,
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
    };
    let mut sum_ad_r3 = 0.0;
    let mut sum_at_r3 = 0.0;
    for k in 0..sens.len() {
        let r = sens.ranges_m[k];
        let r2 = r * r;
        let r3 = r2 * r;
        let r4 = r2 * r2;
        let ad = sens.alpha_d[k];
        let at = sens.alpha_theta[k];
        let wd = beta * sens.one_minus_alpha_d[k] + z_d;
        let wt = beta * at + z_theta;
        s.a1 += ad * ad / r4;
        s.a2 += wd.norm_sqr() / r2;
        s.b1 += at * at / r4;
        s.b2 += wt.norm_sqr() / r2;
        s.c1 += ad * at / r4;
        s.c2 += (wd.conj() * wt).re / r2;
        sum_ad_r3 += ad / r3;
        sum_at_r3 += at / r3;
    }
    let im_d = br * z_d.im - bi * z_d.re;
    let im_t = br * z_theta.im - bi * z_theta.re;
    s.a3 = im_d * sum_ad_r3;
    s.b3 = im_t * sum_at_r3;
    s.c3 = im_t * sum_ad_r3 - im_d * sum_at_r3;
    s
}

/// The bracketed terms `(J_dd, J_θθ, J_dθ)/K` expressed through the sums.
///
/// The θθ term enters with `−(4π/λ)B₃`: the cross term of `|γ^θ|²` carries
/// the opposite sign to the range case because the angle derivative of the
/// steering phase is `−(2π/λ)α^θ`.
pub fn unit_fim_from_sums(sums: &GeometrySums, beta: Complex64, wavelength_m: f64) -> FisherMatrix {
    let b2 = beta.norm_sqr();
    let k = 2.0 * PI / wavelength_m;
    FisherMatrix {
        j_dd: b2 * sums.a1 + k * k * sums.a2 + 2.0 * k * sums.a3,
        j_thetatheta: b2 * sums.b1 + k * k * sums.b2 - 2.0 * k * sums.b3,
        j_dtheta: b2 * sums.c1 - k * k * sums.c2 - k * sums.c3,
    }
}

pub fn crlb_closed_form(
    sens: &GeometrySensitivities,
    coupling: &BeamCoupling,
    cfg: &OfdmConfig,
    wavelength_m: f64,
) -> Result<CrlbBound> {
    let sums = geometry_sums(sens, coupling, wavelength_m);
    let u = unit_fim_from_sums(&sums, coupling.beta, wavelength_m);
    let k = fisher_scale(cfg, sens.len(), wavelength_m)?;
    let det = u.j_dd * u.j_thetatheta - u.j_dtheta * u.j_dtheta;
    let scale = u.j_dd * u.j_thetatheta;
    if !(u.j_dd > 0.0 && u.j_thetatheta > 0.0) || !(det > EPS_DET * scale) {
        return Err(Error::Unidentifiable {
            det: det * k * k,
            scale: scale * k * k,
        });
    }
    let denom = k * det;
    let var_d = u.j_thetatheta / denom;
    let var_theta = u.j_dd / denom;
    Ok(CrlbBound {
        var_d,
        var_theta,
        trace: var_d + var_theta,
    })
}

/// Bound at `pos` for beam `f` through the FIM-inverse path.
pub fn crlb(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<CrlbBound> {
    crlb_from_fim(&fim(geom, pos, f, cfg)?)
}

/// Bound at `pos` for beam `f` through the expanded closed form.
pub fn crlb_expanded(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    f: &[Complex64],
    cfg: &OfdmConfig,
) -> Result<CrlbBound> {
    cfg.validate()?;
    let coupling = beam_coupling(geom, pos, f)?;
    crlb_closed_form(
        &geom.sensitivities(pos),
        &coupling,
        cfg,
        geom.wavelength_m(),
    )
}
