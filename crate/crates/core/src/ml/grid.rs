//! Coarse grid search over the ML cost.
//!
//! Each range row first re-phases the matched-filter bank for its delay. When
//! the angle count is a multiple of `n_a`, every element sees the same set of
//! relative angles `θ_t − ψ_k`, so one table of steering entries and gains per
//! row serves all elements. The per-cell sums over elements are then circular
//! convolutions, evaluated with batched FFTs in `O(n_θ log n_a)` per row.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{delay_sums, delay_weights, Evaluator, MatchedFilterBank};
use crate::error::{invalid, Result};
use crate::geometry::{PolarPosition, UcaGeometry, SPEED_OF_LIGHT};
use crate::signal::{Observation, OfdmConfig};

/// How range rows are placed between `d_min_m` and `d_max_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RowSpacing {
    /// `n_d` geometrically spaced rows.
    Log { n_d: usize },
    /// Steps of at most `inv_step_per_m` in `1/d` and at most `max_step_m` in `d`.
    Adaptive {
        inv_step_per_m: f64,
        max_step_m: f64,
    },
}

/// Oversampling factors of the resolving grid, relative to the main-lobe
/// scales of the cost surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Angle step in units of `λ/(4πR)`.
    pub theta_factor: f64,
    /// Inverse-range step in units of `λ/R²`.
    pub inv_range_factor: f64,
    /// Range step in units of `c/(2B)`.
    pub delay_factor: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            theta_factor: 1.0,
            inv_range_factor: 1.0,
            delay_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub n_theta: usize,
    pub n_basins: usize,
    pub rows: RowSpacing,
}

impl GridSpec {
    /// `n_d` log-spaced rows over `[max(2R, 1 m), d_max]`, `n_θ` uniform angles.
    pub fn log_spaced(
        geom: &UcaGeometry,
        d_max_m: f64,
        n_d: usize,
        n_theta: usize,
        n_basins: usize,
    ) -> Self {
        Self {
            d_min_m: (2.0 * geom.radius_m()).max(1.0),
            d_max_m,
            n_theta,
            n_basins,
            rows: RowSpacing::Log { n_d },
        }
    }

    /// Grid fine enough to place a node inside the main lobe of the cost
    /// around any position in `[max(2R, 1 m), d_max]`.
    pub fn resolving(
        geom: &UcaGeometry,
        cfg: &OfdmConfig,
        d_max_m: f64,
        res: &Resolution,
        n_basins: usize,
    ) -> Self {
        let n_a = geom.n_elements();
        let lam = geom.wavelength_m();
        let big_r = geom.radius_m();
        let dtheta = res.theta_factor * lam / (4.0 * PI * big_r);
        let blocks = (TAU / (n_a as f64 * dtheta)).ceil().max(1.0) as usize;
        let range_res = SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz());
        Self {
            d_min_m: (2.0 * big_r).max(1.0),
            d_max_m,
            n_theta: blocks * n_a,
            n_basins,
            rows: RowSpacing::Adaptive {
                inv_step_per_m: res.inv_range_factor * lam / (big_r * big_r),
                max_step_m: res.delay_factor * range_res,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min_m > 0.0 && self.d_min_m.is_finite()) {
            return Err(invalid("d_min_m", "must be positive"));
        }
        if !(self.d_max_m > self.d_min_m && self.d_max_m.is_finite()) {
            return Err(invalid("d_max_m", "must exceed d_min_m"));
        }
        if self.n_theta == 0 {
            return Err(invalid("n_theta", "must be at least 1"));
        }
        if self.n_basins == 0 {
            return Err(invalid("n_basins", "must be at least 1"));
        }
        match self.rows {
            RowSpacing::Log { n_d: 0 } => {
                return Err(invalid("n_d", "must be at least 1"))
            }
            RowSpacing::Adaptive {
                inv_step_per_m,
                max_step_m,
            } if !(inv_step_per_m > 0.0 && max_step_m > 0.0) => {
                return Err(invalid("rows", "adaptive steps must be positive"))
            }
            _ => {}
        }
        if self.n_basins > self.n_d() * self.n_theta {
            return Err(invalid("n_basins", "exceeds the number of grid cells"));
        }
        Ok(())
    }

    pub fn range_nodes(&self) -> Vec<f64> {
        match self.rows {
            RowSpacing::Log { n_d } => {
                if n_d == 1 {
                    return vec![self.d_min_m];
                }
                let ratio = (self.d_max_m / self.d_min_m).ln() / (n_d - 1) as f64;
                (0..n_d)
                    .map(|i| {
                        if i + 1 == n_d {
                            self.d_max_m
                        } else {
                            self.d_min_m * (ratio * i as f64).exp()
                        }
                    })
                    .collect()
            }
            RowSpacing::Adaptive {
                inv_step_per_m,
                max_step_m,
            } => {
                let mut out = vec![self.d_min_m];
                let mut d = self.d_min_m;
                loop {
                    let inv = 1.0 / d - inv_step_per_m;
                    let by_curvature = if inv > 0.0 { 1.0 / inv } else { f64::INFINITY };
                    d = by_curvature.min(d + max_step_m);
                    if d >= self.d_max_m * (1.0 - 1e-12) {
                        out.push(self.d_max_m);
                        break;
                    }
                    out.push(d);
                }
                out
            }
        }
    }

    pub fn n_d(&self) -> usize {
        match self.rows {
            RowSpacing::Log { n_d } => n_d,
            RowSpacing::Adaptive { .. } => self.range_nodes().len(),
        }
    }

    pub fn theta_node(&self, t: usize) -> f64 {
        TAU * t as f64 / self.n_theta as f64
    }
}

/// A grid-local minimum of the cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Basin {
    pub position: PolarPosition,
    pub cost: f64,
    pub d_index: usize,
    pub theta_index: usize,
}

fn key(b: &Basin) -> (f64, usize, usize) {
    (b.cost, b.d_index, b.theta_index)
}

/// Strict order on `(cost, d index, θ index)`; NaN costs sort last.
fn less(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    let ca = if a.0.is_nan() { f64::INFINITY } else { a.0 };
    let cb = if b.0.is_nan() { f64::INFINITY } else { b.0 };
    if ca != cb {
        return ca < cb;
    }
    (a.1, a.2) < (b.1, b.2)
}

/// Bounded list of the lowest basins, kept sorted.
struct Best {
    cap: usize,
    items: Vec<Basin>,
}

impl Best {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    fn would_accept(&self, k: (f64, usize, usize)) -> bool {
        self.items.len() < self.cap || less(k, key(self.items.last().unwrap()))
    }

    fn push(&mut self, b: Basin) {
        if !self.would_accept(key(&b)) {
            return;
        }
        let pos = self.items.partition_point(|x| less(key(x), key(&b)));
        self.items.insert(pos, b);
        self.items.truncate(self.cap);
    }
}

/// Precomputed state of the FFT row kernel.
///
/// With `n_θ = q·n_a`, write cell `t = u q + v`. The relative angle index of
/// element `k` is `t − k q = (u − k) q + v`, so for each residue `v` the beam
/// coupling and the matched correlation are length-`n_a` circular
/// convolutions of per-row tables with `f` and `S*`.
struct FastPlan {
    q: usize,
    /// `cos φ` in residue-major order `v·n_a + w`, `φ = 2π(w q + v)/n_θ`.
    cos_phi: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    f_hat: Vec<Complex64>,
}

/// Computes one row of costs.
struct RowEngine<'a> {
    eval: &'a Evaluator<'a>,
    cfg: &'a OfdmConfig,
    bank: &'a MatchedFilterBank,
    f: &'a [Complex64],
    n_theta: usize,
    fast: Option<FastPlan>,
}

impl<'a> RowEngine<'a> {
    fn new(
        eval: &'a Evaluator<'a>,
        cfg: &'a OfdmConfig,
        bank: &'a MatchedFilterBank,
        f: &'a [Complex64],
        n_theta: usize,
    ) -> Self {
        let n_a = f.len();
        let fast = n_theta.is_multiple_of(n_a).then(|| {
            let q = n_theta / n_a;
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(n_a);
            let inv = planner.plan_fft_inverse(n_a);
            let mut f_hat = f.to_vec();
            fwd.process(&mut f_hat);
            let cos_phi = (0..n_theta)
                .map(|idx| {
                    let (v, w) = (idx / n_a, idx % n_a);
                    (TAU * (w * q + v) as f64 / n_theta as f64).cos()
                })
                .collect();
            FastPlan {
                q,
                cos_phi,
                fwd,
                inv,
                f_hat,
            }
        });
        Self {
            eval,
            cfg,
            bank,
            f,
            n_theta,
            fast,
        }
    }

    fn row(&self, d: f64, out: &mut [f64], scratch: &mut RowScratch) {
        let s = delay_sums(self.bank, &delay_weights(self.cfg, d));
        let e = self.eval.e_per_element;
        let Some(plan) = &self.fast else {
            for (t, c) in out.iter_mut().enumerate() {
                let theta = TAU * t as f64 / self.n_theta as f64;
                *c = self.direct_cell(d, theta, &s, e);
            }
            return;
        };
        let geom = self.eval.geom();
        let n_a = geom.n_elements();
        let n = self.n_theta;
        let q = plan.q;
        let k0 = geom.wavenumber();
        let lam = geom.wavelength_m();
        let big_r = geom.radius_m();
        let amp = 1.0 / (n_a as f64).sqrt();
        scratch.resize(n, q, plan.fwd.get_inplace_scratch_len().max(plan.inv.get_inplace_scratch_len()));

        // φ and −φ give the same range, so half the table is mirrored
        let idx = |j: usize| (j % q) * n_a + j / q;
        for j in 0..=n / 2 {
            let i0 = idx(j);
            let r = (d * d + big_r * big_r - 2.0 * d * big_r * plan.cos_phi[i0]).sqrt();
            let a = Complex64::from_polar(amp, k0 * (d - r));
            let g = lam / (4.0 * PI * r);
            scratch.a[i0] = a;
            scratch.ga[i0] = a * g;
            scratch.g2[i0] = g * g;
            let mirror = (n - j) % n;
            if mirror != j {
                let i1 = idx(mirror);
                scratch.a[i1] = a;
                scratch.ga[i1] = a * g;
                scratch.g2[i1] = g * g;
            }
        }
        for v in 0..q {
            scratch.pq[v] = scratch.g2[v * n_a..(v + 1) * n_a].iter().sum();
        }
        let mut s_hat: Vec<Complex64> = s.iter().map(|x| x.conj()).collect();
        plan.fwd.process(&mut s_hat);

        plan.fwd.process_with_scratch(&mut scratch.a, &mut scratch.fft);
        plan.fwd.process_with_scratch(&mut scratch.ga, &mut scratch.fft);
        for v in 0..q {
            let blk = v * n_a..(v + 1) * n_a;
            for ((x, y), (fh, sh)) in scratch.a[blk.clone()]
                .iter_mut()
                .zip(&mut scratch.ga[blk])
                .zip(plan.f_hat.iter().zip(&s_hat))
            {
                *x *= fh;
                *y *= sh;
            }
        }
        plan.inv.process_with_scratch(&mut scratch.a, &mut scratch.fft);
        plan.inv.process_with_scratch(&mut scratch.ga, &mut scratch.fft);

        let norm = 1.0 / n_a as f64;
        for v in 0..q {
            for u in 0..n_a {
                let beta = scratch.a[v * n_a + u] * norm;
                let x = scratch.ga[v * n_a + u] * norm;
                out[u * q + v] = e * beta.norm_sqr() * scratch.pq[v] - 2.0 * (beta * x).re;
            }
        }
    }

    fn direct_cell(&self, d: f64, theta: f64, s: &[Complex64], e: f64) -> f64 {
        let geom = self.eval.geom();
        let pos = PolarPosition { d_m: d, theta_rad: theta };
        let a = geom.steering_vector(&pos).0;
        let g = geom.sensitivities(&pos).gains;
        let mut beta = Complex64::new(0.0, 0.0);
        let mut x = Complex64::new(0.0, 0.0);
        let mut p = 0.0;
        for k in 0..a.len() {
            beta += a[k] * self.f[k];
            x += g[k] * a[k] * s[k].conj();
            p += g[k] * g[k];
        }
        e * beta.norm_sqr() * p - 2.0 * (beta * x).re
    }
}

#[derive(Default)]
struct RowScratch {
    a: Vec<Complex64>,
    ga: Vec<Complex64>,
    g2: Vec<f64>,
    pq: Vec<f64>,
    fft: Vec<Complex64>,
}

impl RowScratch {
    fn resize(&mut self, n: usize, q: usize, fft: usize) {
        let zero = Complex64::new(0.0, 0.0);
        self.a.resize(n, zero);
        self.ga.resize(n, zero);
        self.g2.resize(n, 0.0);
        self.pq.resize(q, 0.0);
        self.fft.resize(fft, zero);
    }
}

/// Rows per parallel work unit.
const ROWS_PER_CHUNK: usize = 32;

/// Up to `n_basins` grid-local minima (8-neighbourhood, angle wraps), sorted by
/// ascending cost with ties broken by lowest `(d index, θ index)`.
pub fn coarse_grid_search(
    obs: &Observation,
    geom: &UcaGeometry,
    bank: &MatchedFilterBank,
    spec: &GridSpec,
) -> Result<Vec<Basin>> {
    spec.validate()?;
    if spec.d_min_m <= geom.radius_m() {
        return Err(invalid("d_min_m", "grid must lie outside the array circle"));
    }
    let eval = Evaluator::new(obs, geom, bank)?;
    let engine = RowEngine::new(&eval, &obs.config, bank, &obs.beamformer, spec.n_theta);
    let rows = spec.range_nodes();
    let n_d = rows.len();
    let n_t = spec.n_theta;
    let chunks: Vec<(usize, usize)> = (0..n_d)
        .step_by(ROWS_PER_CHUNK)
        .map(|lo| (lo, (lo + ROWS_PER_CHUNK).min(n_d)))
        .collect();

    let partial: Vec<Vec<Basin>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut best = Best::new(spec.n_basins);
            let mut scratch = RowScratch::default();
            let compute = |i: usize, buf: &mut Vec<f64>, scratch: &mut RowScratch| {
                buf.resize(n_t, 0.0);
                engine.row(rows[i], buf, scratch);
            };
            // sliding window: prev, cur, next
            let mut prev: Option<Vec<f64>> = None;
            if lo > 0 {
                let mut b = Vec::new();
                compute(lo - 1, &mut b, &mut scratch);
                prev = Some(b);
            }
            let mut cur = Vec::new();
            compute(lo, &mut cur, &mut scratch);
            for i in lo..hi {
                let next = if i + 1 < n_d {
                    let mut b = Vec::new();
                    compute(i + 1, &mut b, &mut scratch);
                    Some(b)
                } else {
                    None
                };
                for t in 0..n_t {
                    let k = (cur[t], i, t);
                    if !best.would_accept(k) || !is_local_min(k, prev.as_deref(), &cur, next.as_deref(), i)
                    {
                        continue;
                    }
                    best.push(Basin {
                        position: PolarPosition {
                            d_m: rows[i],
                            theta_rad: spec.theta_node(t),
                        },
                        cost: cur[t],
                        d_index: i,
                        theta_index: t,
                    });
                }
                prev = Some(std::mem::take(&mut cur));
                match next {
                    Some(nx) => cur = nx,
                    None => break,
                }
            }
            best.items
        })
        .collect();

    let mut best = Best::new(spec.n_basins);
    for b in partial.into_iter().flatten() {
        best.push(b);
    }
    Ok(best.items)
}

fn is_local_min(
    k: (f64, usize, usize),
    prev: Option<&[f64]>,
    cur: &[f64],
    next: Option<&[f64]>,
    i: usize,
) -> bool {
    let n = cur.len();
    let t = k.2;
    let left = (t + n - 1) % n;
    let right = (t + 1) % n;
    let neighbours = [left, t, right];
    let rows = [(prev, i.wrapping_sub(1)), (Some(cur), i), (next, i + 1)];
    for (row, ri) in rows {
        let Some(row) = row else { continue };
        for &tt in &neighbours {
            if ri == i && tt == t {
                continue;
            }
            if less((row[tt], ri, tt), k) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::conjugate_focus_beamformer;
    use crate::ml::matched_filter_bank;
    use crate::signal::{generate_pilots, synthesize_observation, SampleTensor};

    fn scene(
        n_a: usize,
        radius: f64,
        pos: PolarPosition,
    ) -> (UcaGeometry, OfdmConfig, Observation) {
        let cfg = OfdmConfig::reference_60ghz().with_subcarriers(16).with_noise(0.0);
        let geom = UcaGeometry::new(n_a, radius, cfg.wavelength_m()).unwrap();
        let f = conjugate_focus_beamformer(&geom, &pos);
        let pilots = generate_pilots(&cfg, 5);
        let obs = synthesize_observation(&geom, &pos, &f, &cfg, &pilots, 0).unwrap();
        (geom, cfg, obs)
    }

    #[test]
    fn log_nodes_span_the_interval() {
        let geom = UcaGeometry::new(8, 0.5, 0.005).unwrap();
        let spec = GridSpec::log_spaced(&geom, 400.0, 256, 512, 15);
        let nodes = spec.range_nodes();
        assert_eq!(nodes.len(), 256);
        assert_eq!(nodes[0], 1.0);
        assert_eq!(nodes[255], 400.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn adaptive_nodes_respect_both_steps() {
        let cfg = OfdmConfig::reference_60ghz().with_subcarriers(128);
        let geom = UcaGeometry::new(64, 2.0, cfg.wavelength_m()).unwrap();
        let spec = GridSpec::resolving(&geom, &cfg, 400.0, &Resolution::default(), 15);
        let RowSpacing::Adaptive {
            inv_step_per_m,
            max_step_m,
        } = spec.rows
        else {
            panic!()
        };
        let nodes = spec.range_nodes();
        assert_eq!(nodes[0], 4.0);
        assert_eq!(*nodes.last().unwrap(), 400.0);
        for w in nodes.windows(2) {
            assert!(w[1] - w[0] <= max_step_m * (1.0 + 1e-12));
            assert!(1.0 / w[0] - 1.0 / w[1] <= inv_step_per_m * (1.0 + 1e-9));
        }
        assert_eq!(spec.n_theta % 64, 0);
    }

    #[test]
    fn table_rows_match_direct_cost() {
        let pos = PolarPosition::new(6.0, 1.0).unwrap();
        let (geom, _, obs) = scene(8, 0.3, pos);
        let bank = matched_filter_bank(&obs);
        let eval = Evaluator::new(&obs, &geom, &bank).unwrap();
        let engine = RowEngine::new(&eval, &obs.config, &bank, &obs.beamformer, 64);
        let mut out = vec![0.0; 64];
        let mut scratch = RowScratch::default();
        engine.row(5.5, &mut out, &mut scratch);
        for (t, c) in out.iter().enumerate() {
            let p = PolarPosition::new(5.5, TAU * t as f64 / 64.0).unwrap();
            let direct = eval.cost(&p);
            assert!((c - direct).abs() < 1e-10 * direct.abs().max(1e-30) + 1e-12 * eval.cost(&pos).abs());
        }
    }

    #[test]
    fn truth_on_node_is_first_basin_for_both_paths() {
        for n_theta in [96usize, 90] {
            let spec = GridSpec {
                d_min_m: 2.0,
                d_max_m: 12.0,
                n_theta,
                n_basins: 5,
                rows: RowSpacing::Log { n_d: 21 },
            };
            let nodes = spec.range_nodes();
            let pos = PolarPosition::new(nodes[10], spec.theta_node(n_theta / 3)).unwrap();
            let (geom, _, obs) = scene(8, 0.3, pos);
            let bank = matched_filter_bank(&obs);
            let basins = coarse_grid_search(&obs, &geom, &bank, &spec).unwrap();
            assert!(!basins.is_empty() && basins.len() <= 5);
            assert_eq!((basins[0].d_index, basins[0].theta_index), (10, n_theta / 3));
            assert!(basins.windows(2).all(|w| w[0].cost <= w[1].cost));
        }
    }

    #[test]
    fn constant_surface_has_deterministic_single_basin() {
        let pos = PolarPosition::new(6.0, 1.0).unwrap();
        let (geom, cfg, mut obs) = scene(8, 0.3, pos);
        // silent pilots and a zero observation make the cost identically zero
        obs.samples = SampleTensor::zeros(cfg.n_symbols, cfg.m_subcarriers, 8);
        obs.pilots = crate::signal::PilotGrid::from_symbols(
            cfg.n_symbols,
            cfg.m_subcarriers,
            vec![Complex64::new(0.0, 0.0); cfg.n_symbols * cfg.m_subcarriers],
        )
        .unwrap();
        let bank = matched_filter_bank(&obs);
        let spec = GridSpec {
            d_min_m: 2.0,
            d_max_m: 12.0,
            n_theta: 16,
            n_basins: 15,
            rows: RowSpacing::Log { n_d: 5 },
        };
        let a = coarse_grid_search(&obs, &geom, &bank, &spec).unwrap();
        let b = coarse_grid_search(&obs, &geom, &bank, &spec).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty() && a.len() <= 15);
        assert_eq!((a[0].d_index, a[0].theta_index), (0, 0));
    }

    #[test]
    fn rejects_bad_specs() {
        let geom = UcaGeometry::new(8, 0.5, 0.005).unwrap();
        let mut spec = GridSpec::log_spaced(&geom, 400.0, 4, 4, 17);
        assert!(spec.validate().is_err());
        spec.n_basins = 3;
        spec.d_max_m = 0.5;
        assert!(spec.validate().is_err());
    }
}
