//! Transmit beam design: minimizing the CRLB trace on the complex unit sphere.
//!
//! Gradients are returned in real form: for `f_k = u_k + j v_k` the k-th entry
//! is `∂Tr/∂u_k + j ∂Tr/∂v_k = 2 ∂Tr/∂f_k*`. This is the direction of steepest
//! ascent under the real inner product `Re⟨x, y⟩`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crlb::{crlb, fisher_scale, EPS_DET};
use crate::error::{invalid, Error, Result};
use crate::geometry::{PolarPosition, UcaGeometry};
use crate::linalg::{check_len, check_unit_norm, inner, norm, normalized};
use crate::rng::{child_seed, rng_from_seed};
use crate::signal::OfdmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stopping threshold on the tangent gradient norm, relative to its
    /// value at the initial point.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Length of the first trial step on the sphere.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_backtracks: 50,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(invalid("grad_tol", "must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(invalid("armijo_c", "must lie in (0, 1)"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(invalid("backtrack_factor", "must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(invalid("initial_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub beamformer: Vec<Complex64>,
    /// Objective at the initial point followed by every accepted iterate.
    pub trace_history: Vec<f64>,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
}

impl OptimizerResult {
    pub fn final_trace(&self) -> f64 {
        *self.trace_history.last().expect("history holds the initial trace")
    }
}

/// Per-position quantities reused across objective evaluations.
pub(crate) struct TraceModel {
    a: Vec<Complex64>,
    dd: Vec<f64>,
    dt: Vec<f64>,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    inv_r2: Vec<f64>,
    k0: f64,
    scale: f64,
}

struct Parts {
    r: f64,
    t: f64,
    x: f64,
    gd: Vec<Complex64>,
    gt: Vec<Complex64>,
}

impl TraceModel {
    pub(crate) fn new(geom: &UcaGeometry, pos: &PolarPosition, cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        geom.check_position(pos)?;
        let sens = geom.sensitivities(pos);
        let k0 = 2.0 * PI / geom.wavelength_m();
        let j = Complex64::i();
        let n = geom.n_elements();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut inv_r2 = Vec::with_capacity(n);
        for k in 0..n {
            let r = sens.ranges_m[k];
            p.push(-sens.alpha_d[k] / r + j * k0 * sens.one_minus_alpha_d[k]);
            q.push(-sens.alpha_theta[k] / r - j * k0 * sens.alpha_theta[k]);
            inv_r2.push(1.0 / (r * r));
        }
        Ok(Self {
            a: geom.steering_vector(pos).0,
            dd: sens.one_minus_alpha_d,
            dt: sens.alpha_theta,
            p,
            q,
            inv_r2,
            k0,
            scale: fisher_scale(cfg, n, geom.wavelength_m())?,
        })
    }

    fn parts(&self, f: &[Complex64]) -> Parts {
        let mut beta = Complex64::new(0.0, 0.0);
        let mut zd = Complex64::new(0.0, 0.0);
        let mut zt = Complex64::new(0.0, 0.0);
        for k in 0..self.a.len() {
            let af = self.a[k] * f[k];
            beta += af;
            zd += af * self.dd[k];
            zt += af * self.dt[k];
        }
        let j = Complex64::i();
        let (mut r, mut t, mut x) = (0.0, 0.0, 0.0);
        let mut gd = Vec::with_capacity(self.a.len());
        let mut gt = Vec::with_capacity(self.a.len());
        for k in 0..self.a.len() {
            let g1 = self.p[k] * beta + j * self.k0 * zd;
            let g2 = self.q[k] * beta - j * self.k0 * zt;
            let w = self.inv_r2[k];
            r += g1.norm_sqr() * w;
            t += g2.norm_sqr() * w;
            x += (g1.conj() * g2).re * w;
            gd.push(g1);
            gt.push(g2);
        }
        Parts {
            r,
            t,
            x,
            gd,
            gt,
        }
    }

    fn trace_of(&self, p: &Parts) -> Result<f64> {
        let det = p.r * p.t - p.x * p.x;
        let scale = p.r * p.t;
        if !(p.r > 0.0 && p.t > 0.0) || !(det > EPS_DET * scale) {
            return Err(Error::Unidentifiable {
                det: det * self.scale * self.scale,
                scale: scale * self.scale * self.scale,
            });
        }
        Ok((p.r + p.t) / (self.scale * det))
    }

    pub(crate) fn value(&self, f: &[Complex64]) -> Result<f64> {
        self.trace_of(&self.parts(f))
    }

    pub(crate) fn value_grad(&self, f: &[Complex64]) -> Result<(f64, Vec<Complex64>)> {
        let pr = self.parts(f);
        let tr = self.trace_of(&pr)?;
        let j = Complex64::i();
        let c2 = (j * self.k0).conj();
        let c3 = (-j * self.k0).conj();

        // conjugate-coordinate partials of R, T, X in β, z^d, z^θ
        let zero = Complex64::new(0.0, 0.0);
        let (mut r_b, mut r_zd) = (zero, zero);
        let (mut t_b, mut t_zt) = (zero, zero);
        let (mut x_b, mut x_zd, mut x_zt) = (zero, zero, zero);
        for k in 0..self.a.len() {
            let w = self.inv_r2[k];
            let (gd, gt) = (pr.gd[k], pr.gt[k]);
            let (pc, qc) = (self.p[k].conj(), self.q[k].conj());
            r_b += gd * pc * w;
            r_zd += gd * c2 * w;
            t_b += gt * qc * w;
            t_zt += gt * c3 * w;
            x_b += (pc * gt + gd * qc) * (0.5 * w);
            x_zd += c2 * gt * (0.5 * w);
            x_zt += gd * c3 * (0.5 * w);
        }
        let num = pr.r + pr.t;
        let den = pr.r * pr.t - pr.x * pr.x;
        let quot = |dr: Complex64, dt: Complex64, dx: Complex64| {
            let dden = pr.t * dr + pr.r * dt - 2.0 * pr.x * dx;
            ((dr + dt) * den - num * dden) / (self.scale * den * den)
        };
        let g_b = quot(r_b, t_b, x_b);
        let g_zd = quot(r_zd, zero, x_zd);
        let g_zt = quot(zero, t_zt, x_zt);

        let grad = (0..self.a.len())
            .map(|k| {
                let ac = self.a[k].conj();
                2.0 * ac * (g_b + g_zd * self.dd[k] + g_zt * self.dt[k])
            })
            .collect();
        Ok((tr, grad))
    }
}

fn check_beam(geom: &UcaGeometry, f: &[Complex64]) -> Result<()> {
    check_len("beamformer", geom.n_elements(), f.len())?;
    check_unit_norm(f)
}

/// CRLB trace `(J_dd + J_θθ)/det J` for beam `f` at `pos`.
pub fn trace_objective(
    f: &[Complex64],
    geom: &UcaGeometry,
    pos: &PolarPosition,
    cfg: &OfdmConfig,
) -> Result<f64> {
    Ok(crlb(geom, pos, f, cfg)?.trace)
}

/// Analytic gradient of the trace objective in real form (see module docs).
pub fn wirtinger_gradient(
    f: &[Complex64],
    geom: &UcaGeometry,
    pos: &PolarPosition,
    cfg: &OfdmConfig,
) -> Result<Vec<Complex64>> {
    check_beam(geom, f)?;
    Ok(TraceModel::new(geom, pos, cfg)?.value_grad(f)?.1)
}

/// Removes the radial component: `g − Re⟨g, f⟩ f`.
pub fn tangent_project(grad: &[Complex64], f: &[Complex64]) -> Vec<Complex64> {
    let radial = inner(grad, f).re;
    grad.iter().zip(f).map(|(g, fk)| g - radial * fk).collect()
}

/// `(f − step·dir)/‖f − step·dir‖`.
pub fn retract(f: &[Complex64], step: f64, descent_dir: &[Complex64]) -> Result<Vec<Complex64>> {
    let moved: Vec<Complex64> = f
        .iter()
        .zip(descent_dir)
        .map(|(x, d)| x - step * d)
        .collect();
    if norm(&moved) < 1e-14 {
        return Err(Error::StepTooLarge);
    }
    normalized(&moved).ok_or(Error::StepTooLarge)
}

/// `a*(d,θ)`, the beam maximizing `|aᵀf|` on the unit sphere.
pub fn conjugate_focus_beamformer(geom: &UcaGeometry, pos: &PolarPosition) -> Vec<Complex64> {
    geom.steering_vector(pos).conj()
}

/// Riemannian gradient descent with Armijo backtracking from `init`
/// (conjugate focus when `None`).
pub fn optimize_beamformer(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    cfg: &OfdmConfig,
    opt: &OptimizerConfig,
    init: Option<&[Complex64]>,
) -> Result<OptimizerResult> {
    optimize_beamformer_observed(geom, pos, cfg, opt, init, |_, _| {})
}

/// [`optimize_beamformer`], calling `observe(f, trace)` on the starting point
/// and on every accepted iterate.
pub fn optimize_beamformer_observed(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    cfg: &OfdmConfig,
    opt: &OptimizerConfig,
    init: Option<&[Complex64]>,
    mut observe: impl FnMut(&[Complex64], f64),
) -> Result<OptimizerResult> {
    opt.validate()?;
    let model = TraceModel::new(geom, pos, cfg)?;
    let mut f = match init {
        Some(v) => {
            check_beam(geom, v)?;
            v.to_vec()
        }
        None => conjugate_focus_beamformer(geom, pos),
    };
    let (mut tr, g) = model.value_grad(&f)?;
    let mut pg = tangent_project(&g, &f);
    let mut gn = norm(&pg);
    let tol = opt.grad_tol * gn;
    observe(&f, tr);
    let mut history = vec![tr];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut prev_step: Option<f64> = None;

    while iterations < opt.max_iters {
        if gn <= tol || gn == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let cap = opt.initial_step / gn;
        let mut step = prev_step.map_or(cap, |s| (2.0 * s).min(cap));
        let mut accepted = None;
        for _ in 0..=opt.max_backtracks {
            if let Ok(cand) = retract(&f, step, &pg) {
                if let Ok(tc) = model.value(&cand) {
                    if tc <= tr - opt.armijo_c * step * gn * gn {
                        accepted = Some((cand, tc));
                        break;
                    }
                }
            }
            step *= opt.backtrack_factor;
        }
        let Some((cand, tc)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;
        prev_step = Some(step);
        f = cand;
        let (t_new, g) = model.value_grad(&f)?;
        debug_assert!((t_new - tc).abs() <= 1e-12 * tc);
        tr = tc;
        observe(&f, tr);
        history.push(tr);
        pg = tangent_project(&g, &f);
        gn = norm(&pg);
    }
    if stop == StopReason::MaxIterations && (gn <= tol || gn == 0.0) {
        stop = StopReason::Converged;
    }
    Ok(OptimizerResult {
        beamformer: f,
        trace_history: history,
        final_grad_norm: gn,
        iterations,
        converged: stop == StopReason::Converged,
        stop,
    })
}

/// Best of the conjugate-focus start and `starts` random unit starts.
pub fn optimize_beamformer_multistart(
    geom: &UcaGeometry,
    pos: &PolarPosition,
    cfg: &OfdmConfig,
    opt: &OptimizerConfig,
    starts: usize,
    seed: u64,
) -> Result<OptimizerResult> {
    let mut best = optimize_beamformer(geom, pos, cfg, opt, None)?;
    for s in 0..starts {
        let init = random_unit_vector(geom.n_elements(), child_seed(seed, &[s as u64]));
        match optimize_beamformer(geom, pos, cfg, opt, Some(&init)) {
            Ok(res) if res.final_trace() < best.final_trace() => best = res,
            Ok(_) | Err(Error::Unidentifiable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// Unit vector with i.i.d. complex Gaussian entries before normalization.
pub fn random_unit_vector(n: usize, seed: u64) -> Vec<Complex64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from_seed(seed);
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            })
            .collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}
