//! Littlewood-Paley blocks, dominating-mixed Besov norms, Slobodeckii seminorms and
//! refinement sweeps for regularity thresholds.

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{transform_forward, Field, Grid};
use crate::kinetic::smooth_step;
use rayon::prelude::*;
use rustfft::FftDirection;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

/// Dyadic partition of unity in |xi|. `chi` is 1 on `[0, 1]` and 0 beyond `2^ramp`;
/// `phi_0 = chi`, `phi_j(xi) = chi(xi / 2^j) - chi(xi / 2^(j-1))`, so `phi_j` lives in
/// `[2^(j-1), 2^(j+1)]` and only neighbours overlap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DyadicPartition {
    /// Width of the roll-off of `chi`, in octaves.
    pub ramp: f64,
}

impl Default for DyadicPartition {
    fn default() -> Self {
        Self { ramp: 0.125 }
    }
}

impl DyadicPartition {
    pub fn new(ramp: f64) -> Result<Self> {
        if !(ramp > 0.0 && ramp < 1.0) {
            return Err(Error::InvalidParameter(format!("ramp must lie in (0, 1), got {ramp}")));
        }
        Ok(Self { ramp })
    }

    fn chi(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return 1.0;
        }
        1.0 - smooth_step(r.log2() / self.ramp)
    }

    /// The annulus bump `phi = chi(.) - chi(2 .)`, supported in `[1/2, 2]`.
    pub fn bump(&self, r: f64) -> f64 {
        self.chi(r) - self.chi(2.0 * r)
    }

    pub fn block(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            self.chi(r)
        } else {
            self.bump(r / 2f64.powi(j as i32))
        }
    }

    /// Largest block index whose support meets `[0, cutoff]`.
    pub fn max_block(&self, cutoff: f64) -> usize {
        if cutoff <= 1.0 {
            return if cutoff * 2f64.powf(-self.ramp) < 1.0 { 0 } else { 1 };
        }
        (cutoff.log2().ceil() as usize).max(1)
    }
}

/// Block norms `||F^-1 psi_l phi_j F f||_{L^p}` keyed by `(l, j)`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSpectrum {
    pub p: f64,
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl BlockSpectrum {
    pub fn get(&self, l: usize, j: usize) -> Option<f64> {
        self.entries.get(&(l, j)).copied()
    }

    fn aggregate(&self, by_j: bool) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(l, j), &v) in &self.entries {
            *acc.entry(if by_j { j } else { l }).or_default() += v.powf(self.p);
        }
        acc.into_iter().map(|(k, v)| (k, v.powf(1.0 / self.p))).collect()
    }

    /// `(sum_l ||block_{l,j}||^p)^{1/p}` per spatial index.
    pub fn spatial_profile(&self) -> Vec<(usize, f64)> {
        self.aggregate(true)
    }

    pub fn temporal_profile(&self) -> Vec<(usize, f64)> {
        self.aggregate(false)
    }

    /// Least-squares slope of `log2` of the spatial profile over `j_lo..=j_hi`.
    pub fn spatial_slope(&self, j_lo: usize, j_hi: usize) -> Result<f64> {
        fit_window(&self.spatial_profile(), j_lo, j_hi)
    }

    pub fn temporal_slope(&self, l_lo: usize, l_hi: usize) -> Result<f64> {
        fit_window(&self.temporal_profile(), l_lo, l_hi)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,j,norm")?;
        for ((l, j), v) in &self.entries {
            writeln!(w, "{l},{j},{v}")?;
        }
        Ok(())
    }
}

fn fit_window(profile: &[(usize, f64)], lo: usize, hi: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|(k, v)| *k >= lo && *k <= hi && *v > 0.0)
        .map(|&(k, v)| (k as f64, v.log2()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(format!("fit window {lo}..={hi} has fewer than two usable blocks")));
    }
    Ok(linear_slope(&pts))
}

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Smooth cutoff on `[0, T]` rising over the first quarter and falling over the last.
pub fn time_cutoff(t: f64, t_span: f64) -> f64 {
    let s = 4.0 * t / t_span;
    smooth_step(s) - smooth_step(s - 3.0)
}

struct SpaceTime {
    grid: Grid,
    nt: usize,
    t_span: f64,
    coeffs: Vec<Complex64>,
}

impl SpaceTime {
    fn new(samples: &[Field], t_span: f64) -> Result<Self> {
        let nt = samples.len();
        if nt == 0 || !nt.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("N_t = {nt} is not a power of two")));
        }
        let grid = *samples[0].grid();
        if samples.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let m = grid.len();
        let mut coeffs = Vec::with_capacity(nt * m);
        for (k, s) in samples.iter().enumerate() {
            let w = if nt == 1 { 1.0 } else { time_cutoff(k as f64 * t_span / nt as f64, t_span) };
            coeffs.extend(s.values().iter().map(|&v| Complex64::new(w * v, 0.0)));
        }
        let shape = Self::shape(nt, &grid);
        fft_nd(&mut coeffs, &shape, FftDirection::Forward);
        let scale = 1.0 / coeffs.len() as f64;
        coeffs.iter_mut().for_each(|c| *c *= scale);
        Ok(Self { grid, nt, t_span, coeffs })
    }

    fn shape(nt: usize, grid: &Grid) -> Vec<usize> {
        let mut s = vec![nt];
        s.extend(grid.shape());
        s
    }

    fn tau(&self, k: usize) -> f64 {
        let n = self.nt as i64;
        let s = if (k as i64) < (n + 1) / 2 { k as i64 } else { k as i64 - n };
        2.0 * PI * s.unsigned_abs() as f64 / self.t_span
    }

    fn ranges(&self, part: &DyadicPartition) -> (usize, usize) {
        let l_max = if self.nt == 1 { 0 } else { part.max_block(PI * self.nt as f64 / self.t_span) };
        (l_max, part.max_block(self.grid.max_wavevector_norm()))
    }

    /// Inverse transform of one `(l, j)` block, real part, `nt * len` values.
    fn block(&self, part: &DyadicPartition, l: usize, j: usize) -> Vec<f64> {
        let m = self.grid.len();
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (kt, kx) = (idx / m, idx % m);
                let wt = if self.nt == 1 { 1.0 } else { part.block(l, self.tau(kt)) };
                c * wt * part.block(j, self.grid.wavevector_norm(kx))
            })
            .collect();
        fft_nd(&mut buf, &Self::shape(self.nt, &self.grid), FftDirection::Inverse);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn weight(&self) -> f64 {
        let dt = if self.nt == 1 { 1.0 } else { self.t_span / self.nt as f64 };
        self.grid.cell_weight() * dt
    }
}

/// Space-time block norms of `samples` taken uniformly on `[0, t_span)`. A single sample is
/// decomposed in space only (all entries at `l = 0`); otherwise the samples are multiplied
/// by [`time_cutoff`] and transformed in `(t, x)`.
pub fn lp_blocks(samples: &[Field], t_span: f64, p: f64, part: &DyadicPartition) -> Result<BlockSpectrum> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter("p must be >= 1".into()));
    }
    let st = SpaceTime::new(samples, t_span)?;
    let (l_max, j_max) = st.ranges(part);
    let pairs: Vec<(usize, usize)> = (0..=l_max).flat_map(|l| (0..=j_max).map(move |j| (l, j))).collect();
    let w = st.weight();
    let entries = pairs
        .par_iter()
        .map(|&(l, j)| {
            let v = st.block(part, l, j);
            ((l, j), (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() * w).powf(1.0 / p))
        })
        .collect();
    Ok(BlockSpectrum { p, entries })
}

/// Sum of all inverse blocks; equals the (cut-off) input up to the partition error.
pub fn reconstruct(samples: &[Field], t_span: f64, part: &DyadicPartition) -> Result<Vec<Field>> {
    let st = SpaceTime::new(samples, t_span)?;
    let (l_max, j_max) = st.ranges(part);
    let mut acc = vec![0.0; st.coeffs.len()];
    for l in 0..=l_max {
        for j in 0..=j_max {
            acc.iter_mut().zip(st.block(part, l, j)).for_each(|(a, v)| *a += v);
        }
    }
    acc.chunks(st.grid.len()).map(|c| Field::new(st.grid, c.to_vec())).collect()
}

/// `(sum_{l,j} (2^{sigma_t l} 2^{sigma_x j} ||block||)^q)^{1/q}`; `q = inf` gives the supremum.
pub fn besov_mixed_norm(spec: &BlockSpectrum, sigma_t: f64, sigma_x: f64, q: f64) -> f64 {
    let terms = spec.entries.iter().map(|(&(l, j), &v)| 2f64.powf(sigma_t * l as f64 + sigma_x * j as f64) * v);
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Exponents `(kappa_t, kappa_x) = ((m-p)/p / (m-1), (p-1)/p * a/(m-1))`.
pub fn kappa(m: f64, p: f64, a: f64) -> (f64, f64) {
    ((m - p) / p / (m - 1.0), (p - 1.0) / p * a / (m - 1.0))
}

/// Split `sigma = k + r` with integer `k` and `r` in `(0, 1)`.
fn split_order(sigma: f64) -> Result<(usize, f64)> {
    let k = sigma.floor();
    let r = sigma - k;
    if !(sigma > 0.0) || r == 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive and non-integer, got {sigma}")));
    }
    Ok((k as usize, r))
}

/// Whole-space Slobodeckii seminorm of a zero-extended field at one derivative order.
///
/// Pairs closer than 1.5 cells use `|grad g| |x - y|`; farther pairs are summed per lattice
/// offset; pairs with one point outside the box are integrated in closed form.
#[derive(Clone, Debug)]
pub struct Slobodeckii {
    d: usize,
    p: f64,
    h: f64,
    order: usize,
    /// Offset (in cells), `sum_i |g_{i+o} - g_i|^p`.
    offsets: Vec<([i64; 2], f64)>,
    /// `int |grad g|^p`.
    grad_p: f64,
    /// `(h^d |g_i|^p, position relative to box edges)`.
    points: Vec<(f64, [f64; 4])>,
}

fn forward_difference(vals: &[f64], h: f64, times: usize) -> Vec<f64> {
    let mut g: Vec<f64> = std::iter::repeat_n(0.0, times + 1).chain(vals.iter().copied()).chain(std::iter::repeat_n(0.0, times + 1)).collect();
    for _ in 0..times {
        g = g.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    }
    g
}

impl Slobodeckii {
    pub fn new(f: &Field, order: usize, p: f64) -> Result<Self> {
        let grid = *f.grid();
        let (d, h) = (grid.dim(), grid.spacing());
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter("p must be >= 1".into()));
        }
        if d == 2 && order > 0 {
            return Err(Error::InvalidParameter("derivative orders above zero are implemented for d = 1".into()));
        }
        if d == 1 {
            let g = forward_difference(f.values(), h, order);
            let x0 = grid.coordinate(0) - (order as f64 + 1.0) * h + 0.5 * order as f64 * h;
            let n = g.len();
            let offsets = (2..n)
                .into_par_iter()
                .map(|o| ([o as i64, 0], (0..n - o).map(|i| (g[i + o] - g[i]).abs().powf(p)).sum::<f64>()))
                .collect();
            let grad_p = g.windows(2).map(|w| ((w[1] - w[0]) / h).abs().powf(p)).sum::<f64>() * h;
            let (lo, hi) = (x0 - 0.5 * h, x0 + (n as f64 - 0.5) * h);
            let points = g
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = x0 + i as f64 * h;
                    (h * v.abs().powf(p), [x - lo, hi - x, 0.0, 0.0])
                })
                .collect();
            return Ok(Self { d, p, h, order, offsets, grad_p, points });
        }
        // d = 2, order 0: zero-pad by two cells so the lattice box contains the support.
        let n = grid.n();
        let m = n + 4;
        let mut g = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                g[(i + 2) * m + j + 2] = f.values()[grid.ravel([i, j])];
            }
        }
        let mi = m as i64;
        let offs: Vec<[i64; 2]> = (-(mi - 1)..mi)
            .flat_map(|a| (-(mi - 1)..mi).map(move |b| [a, b]))
            .filter(|o| o[0].abs().max(o[1].abs()) >= 2)
            .collect();
        let offsets = offs
            .par_iter()
            .map(|&o| {
                let mut s = 0.0;
                for i in 0..mi {
                    let ii = i + o[0];
                    if ii < 0 || ii >= mi {
                        continue;
                    }
                    for j in 0..mi {
                        let jj = j + o[1];
                        if jj < 0 || jj >= mi {
                            continue;
                        }
                        s += (g[(ii * mi + jj) as usize] - g[(i * mi + j) as usize]).abs().powf(p);
                    }
                }
                (o, s)
            })
            .collect();
        let mut grad_p = 0.0;
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let gx = (g[(i + 1) * m + j] - g[i * m + j]) / h;
                let gy = (g[i * m + j + 1] - g[i * m + j]) / h;
                grad_p += gx.hypot(gy).powf(p) * h * h;
            }
        }
        let x0 = grid.coordinate(0) - 2.0 * h;
        let (lo, hi) = (x0 - 0.5 * h, x0 + (m as f64 - 0.5) * h);
        let points = (0..m * m)
            .map(|k| {
                let (x, y) = (x0 + (k / m) as f64 * h, x0 + (k % m) as f64 * h);
                (h * h * g[k].abs().powf(p), [x - lo, hi - x, y - lo, hi - y])
            })
            .collect();
        Ok(Self { d, p, h, order, offsets, grad_p, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `|g|^p_{W^{r,p}}` (the p-th power) for `r` in `(0, 1)`; infinite at `r >= 1`.
    pub fn eval_pow(&self, r: f64) -> f64 {
        let (d, p, h) = (self.d, self.p, self.h);
        let s = r * p;
        if r >= 1.0 {
            return if self.grad_p > 0.0 { f64::INFINITY } else { 0.0 };
        }
        let far: f64 = self
            .offsets
            .iter()
            .map(|(o, sum)| {
                let dist = (o[0] as f64).hypot(o[1] as f64) * h;
                sum * h.powi(2 * d as i32) / dist.powf(d as f64 + s)
            })
            .sum::<f64>();
        let far = if d == 1 { 2.0 * far } else { far };
        let (rho, angular) = if d == 1 {
            (1.5 * h, 2.0)
        } else {
            let c = 2.0 * PI.sqrt() * libm::tgamma(0.5 * (p + 1.0)) / libm::tgamma(0.5 * p + 1.0);
            (3.0 * h / PI.sqrt(), c)
        };
        let band = self.grad_p * angular * rho.powf(p - s) / (p - s);
        let outside: f64 = self
            .points
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, e)| {
                let geo = if d == 1 {
                    (e[0].powf(-s) + e[1].powf(-s)) / s
                } else {
                    outside_square(*e, s)
                };
                2.0 * w * geo
            })
            .sum();
        far + band + outside
    }
}

/// `int_{y outside box} |x - y|^{-2-s} dy` from the distances `[left, right, bottom, top]`.
fn outside_square(e: [f64; 4], s: f64) -> f64 {
    const ANGLES: usize = 128;
    (0..ANGLES)
        .map(|k| {
            let th = 2.0 * PI * (k as f64 + 0.5) / ANGLES as f64;
            let (c, sn) = (th.cos(), th.sin());
            let tx = if c > 0.0 { e[1] / c } else if c < 0.0 { e[0] / -c } else { f64::INFINITY };
            let ty = if sn > 0.0 { e[3] / sn } else if sn < 0.0 { e[2] / -sn } else { f64::INFINITY };
            tx.min(ty).powf(-s) / s
        })
        .sum::<f64>()
        * 2.0
        * PI
        / ANGLES as f64
}

/// `||f||_{W^{sigma,p}}` (Slobodeckii, seminorm of `D^k f` at order `r`, `sigma = k + r`).
pub fn slobodeckii_seminorm(f: &Field, sigma: f64, p: f64) -> Result<f64> {
    let (k, r) = split_order(sigma)?;
    Ok(Slobodeckii::new(f, k, p)?.eval_pow(r).powf(1.0 / p))
}

/// Fourier-side `W^{sigma,2}` seminorm for `sigma` in `(0, 1)`.
pub fn slobodeckii_fourier(f: &Field, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidParameter(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    let grid = *f.grid();
    // 2 * int_0^inf (1 - cos z) z^{-1-2 sigma} dz, by the reflection formula.
    let radial = PI / (libm::tgamma(1.0 + 2.0 * sigma) * (PI * sigma).sin());
    let sphere = if grid.dim() == 1 {
        2.0
    } else {
        2.0 * PI.sqrt() * libm::tgamma(sigma + 0.5) / libm::tgamma(sigma + 1.0)
    };
    let spec = transform_forward(f);
    let vol = grid.total_weight();
    let sum: f64 = spec
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c.norm_sqr() * grid.wavevector_norm(k).powf(2.0 * sigma))
        .sum();
    Ok((vol * sphere * radial * sum).sqrt())
}

/// Consecutive-increment ratio at or above which a refinement sequence is divergent.
pub const INCREMENT_RATIO_THRESHOLD: f64 = 0.97;
/// Growth factor per refinement reported alongside the increment ratio.
pub const GROWTH_THRESHOLD: f64 = 1.5;

/// Snapshots of one resolution; fields carry their times.
#[derive(Clone, Debug)]
pub struct SweepLevel {
    pub n: usize,
    pub snapshots: Vec<Field>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepVerdict {
    pub sigma: f64,
    /// `(N, int ||w^[mu](t)||^p_{W^{sigma,p}} dt)`.
    pub values: Vec<(usize, f64)>,
    pub growth: Vec<f64>,
    pub increment_ratio: Option<f64>,
    pub divergent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub p: f64,
    pub mu_power: f64,
    pub verdicts: Vec<SweepVerdict>,
    /// Smallest swept sigma from which every larger sigma is divergent.
    pub threshold: Option<f64>,
    /// Fitted `log2` slope in `j` of the time-integrated `L^p` block norms on the finest level.
    pub spatial_slope: Option<f64>,
    /// Fitted slope in `l`, when the finest level is uniformly sampled with `N_t = 2^k`.
    pub temporal_slope: Option<f64>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sigma,N,value,divergent")?;
        for v in &self.verdicts {
            for (n, x) in &v.values {
                writeln!(w, "{},{n},{x},{}", v.sigma, v.divergent)?;
            }
        }
        Ok(())
    }
}

fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    if samples.len() == 1 {
        return samples[0].1;
    }
    samples.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

fn signed_power(f: &Field, mu: f64) -> Result<Field> {
    f.map(|v| v.abs().powf(mu) * v.signum())
}

/// Verdict from a refinement sequence (at least two levels).
pub fn divergence_verdict(values: &[f64]) -> (Vec<f64>, Option<f64>, bool) {
    let growth: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    if values.iter().any(|v| v.is_infinite()) {
        return (growth, None, true);
    }
    if values.len() < 3 {
        let div = growth.last().is_some_and(|g| *g >= GROWTH_THRESHOLD);
        return (growth, None, div);
    }
    let k = values.len();
    let (d1, d2) = (values[k - 2] - values[k - 3], values[k - 1] - values[k - 2]);
    let ratio = d2 / d1;
    let div = d1 > 0.0 && d2 > 0.0 && ratio >= INCREMENT_RATIO_THRESHOLD;
    (growth, Some(ratio), div)
}

/// Time-integrated `W^{sigma,p}` seminorms of `w^[mu]` across refinement levels.
pub fn regularity_sweep(levels: &[SweepLevel], p: f64, mu_power: f64, sigmas: &[f64], j_fit: (usize, usize)) -> Result<SweepReport> {
    if levels.is_empty() || levels.iter().any(|l| l.snapshots.is_empty()) {
        return Err(Error::InvalidParameter("sweep needs non-empty levels".into()));
    }
    let mut orders: Vec<usize> = Vec::new();
    for &s in sigmas {
        let (k, _) = split_order(s)?;
        if !orders.contains(&k) {
            orders.push(k);
        }
    }
    // Prepared seminorm tables per level, snapshot and derivative order.
    let mut table: Vec<Vec<Vec<(f64, Slobodeckii)>>> = Vec::new();
    for level in levels {
        let per_snapshot: Result<Vec<Vec<(f64, Slobodeckii)>>> = level
            .snapshots
            .par_iter()
            .map(|s| {
                let w = signed_power(s, mu_power)?;
                let t = s.time().unwrap_or(0.0);
                orders.iter().map(|&k| Ok((t, Slobodeckii::new(&w, k, p)?))).collect()
            })
            .collect();
        table.push(per_snapshot?);
    }
    let verdicts = sigmas
        .iter()
        .map(|&s| {
            let (k, r) = split_order(s)?;
            let oi = orders.iter().position(|&o| o == k).expect("order registered");
            let values: Vec<(usize, f64)> = levels
                .iter()
                .zip(&table)
                .map(|(lvl, snaps)| {
                    let samples: Vec<(f64, f64)> = snaps.iter().map(|v| (v[oi].0, v[oi].1.eval_pow(r))).collect();
                    (lvl.n, trapezoid(&samples))
                })
                .collect();
            let raw: Vec<f64> = values.iter().map(|v| v.1).collect();
            let (growth, increment_ratio, divergent) = divergence_verdict(&raw);
            Ok(SweepVerdict { sigma: s, values, growth, increment_ratio, divergent })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut threshold = None;
    let mut sorted: Vec<&SweepVerdict> = verdicts.iter().collect();
    sorted.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    for (i, v) in sorted.iter().enumerate() {
        if sorted[i..].iter().all(|w| w.divergent) && i > 0 {
            threshold = Some(v.sigma);
            break;
        }
    }
    let finest = levels.last().expect("non-empty");
    let part = DyadicPartition::default();
    let mut acc: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &finest.snapshots {
        let w = signed_power(s, mu_power)?;
        let b = lp_blocks(std::slice::from_ref(&w), 1.0, p, &part)?;
        for ((_, j), v) in b.entries {
            acc.entry(j).or_default().push((s.time().unwrap_or(0.0), v.powf(p)));
        }
    }
    let profile: Vec<(usize, f64)> = acc.into_iter().map(|(j, v)| (j, trapezoid(&v).powf(1.0 / p))).collect();
    let spatial_slope = fit_window(&profile, j_fit.0, j_fit.1).ok();
    let temporal_slope = uniform_span(&finest.snapshots).and_then(|span| {
        let fields: Vec<Field> = finest.snapshots.iter().map(|s| signed_power(s, mu_power)).collect::<Result<_>>().ok()?;
        let b = lp_blocks(&fields, span, p, &part).ok()?;
        let l_max = b.temporal_profile().last()?.0;
        b.temporal_slope(1, l_max).ok()
    });
    Ok(SweepReport { p, mu_power, verdicts, threshold, spatial_slope, temporal_slope })
}

/// Period of uniformly spaced snapshots when their count is a power of two (at least 4).
fn uniform_span(snaps: &[Field]) -> Option<f64> {
    let n = snaps.len();
    if n < 4 || !n.is_power_of_two() {
        return None;
    }
    let t: Vec<f64> = snaps.iter().map(|s| s.time()).collect::<Option<_>>()?;
    let dt = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300)) {
        return None;
    }
    Some(dt * n as f64)
}

/// Spatial block norms of a self-similar solution `t^-alpha f(x t^-beta)` in `L^p((0,T) x R^d)`.
#[derive(Clone, Debug, Serialize)]
pub struct SelfSimilarBlocks {
    pub p: f64,
    /// Exponent `(1 - alpha p + d beta) / beta` governing the decay in `j`.
    pub gamma: f64,
    pub entries: Vec<(usize, f64)>,
}

impl SelfSimilarBlocks {
    pub fn slope(&self, j_lo: usize, j_hi: usize) -> Result<f64> {
        fit_window(&self.entries, j_lo, j_hi)
    }
}

/// Uses `||phi_j(D) u(t)||_p^p = t^{d beta - alpha p} G(2^j t^beta)` with
/// `G(k) = ||phi(D/k) f||_p^p` tabulated from the profile field, so that the time integral
/// becomes `beta^-1 2^{-j gamma} int_0^{2^j T^beta} k^{gamma-1} G(k) dk`.
pub fn selfsimilar_block_norms(
    profile: &Field,
    alpha: f64,
    beta: f64,
    p: f64,
    t_final: f64,
    js: std::ops::RangeInclusive<usize>,
    part: &DyadicPartition,
) -> Result<SelfSimilarBlocks> {
    const PER_OCTAVE: i32 = 16;
    let grid = *profile.grid();
    let d = grid.dim() as f64;
    let gamma = (1.0 - alpha * p + d * beta) / beta;
    let scale = t_final.powf(beta);
    let k_top = scale * 2f64.powi(*js.end() as i32);
    if 2.0 * k_top > grid.nyquist() {
        return Err(Error::InvalidParameter(format!("profile grid resolves |xi| <= {}, need {}", grid.nyquist(), 2.0 * k_top)));
    }
    let k_floor = 8.0 * grid.frequency_spacing();
    let i_lo = ((k_floor / scale).log2() * PER_OCTAVE as f64).ceil() as i32;
    let i_hi = *js.end() as i32 * PER_OCTAVE;
    if i_lo >= i_hi {
        return Err(Error::InvalidParameter("profile box too small for the requested blocks".into()));
    }
    let spec = transform_forward(profile);
    let w = grid.cell_weight();
    let nodes: Vec<f64> = (i_lo..=i_hi).map(|i| scale * 2f64.powf(i as f64 / PER_OCTAVE as f64)).collect();
    let g: Vec<f64> = nodes
        .par_iter()
        .map(|&k| {
            let mut s = spec.clone();
            s.apply_multiplier(|xi| Complex64::new(part.bump(xi[0].hypot(xi[1]) / k), 0.0));
            let f = crate::grid::transform_inverse(&s, &grid).expect("same grid");
            f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * w
        })
        .collect();
    // Below the first node use the low-frequency law G(k) ~ k^{d(p-1)}.
    let head = g[0] * nodes[0].powf(gamma) / (gamma + d * (p - 1.0));
    let integrand: Vec<f64> = nodes.iter().zip(&g).map(|(k, gk)| k.powf(gamma) * gk).collect();
    let dlog = std::f64::consts::LN_2 / PER_OCTAVE as f64;
    let entries = js
        .map(|j| {
            let upto = (j as i32 * PER_OCTAVE - i_lo).max(0) as usize;
            let body: f64 = integrand[..=upto].windows(2).map(|w| 0.5 * (w[0] + w[1]) * dlog).sum();
            let total = (head + body) / beta * 2f64.powf(-(j as f64) * gamma);
            (j, total.powf(1.0 / p))
        })
        .collect();
    Ok(SelfSimilarBlocks { p, gamma, entries })
}
