//! Kinetic function, velocity averages and the dissipation measures `n`, `m`, `q = n + m`
//! histogrammed on a velocity grid.
//!
//! Bin values are averages over the bin: `n_bins[k] = (1/dv) int_{bin k} int int n dx dt dv`,
//! so `sum_k n_bins[k] dv` is the full space-time-velocity integral. Dirac masses in `v`
//! (the parabolic part `m`) land in the bin containing `u(t, x)`.
//!
//! The nonlocal density uses the lattice weights of the operator quadrature: each offset
//! carries `int_cell |y|^2 k0 / |y_j|^2` (the integrand vanishes like `|y|^2` for smooth `u`)
//! plus the masses of its periodic images. The central cell contributes nothing since its
//! `conv` set is empty.

use crate::error::{Error, Result};
use crate::grid::{spectral_laplacian, Field, Grid};
use crate::kernels::KernelSpec;
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::{lattice_weights, OperatorHandle};
use crate::quadrature::Rule;
use crate::solver::{Source, StepInfo, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// `1_{v < u} - 1_{v < 0}`.
pub fn chi(u: f64, v: f64) -> i8 {
    (v < u) as i8 - (v < 0.0) as i8
}

/// Signed length of `[a, b] intersected with the support of chi(u, .)`.
fn chi_overlap(u: f64, a: f64, b: f64) -> f64 {
    let (lo, hi, s) = if u >= 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
    s * (b.min(hi) - a.max(lo)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub m_v: usize,
}

impl VelocityGrid {
    pub const MIN_BINS: usize = 32;

    pub fn new(v_min: f64, v_max: f64, m_v: usize) -> Result<Self> {
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::InvalidParameter(format!("velocity range [{v_min}, {v_max}] is empty")));
        }
        if m_v < Self::MIN_BINS {
            return Err(Error::InvalidParameter(format!("M_v = {m_v} below {}", Self::MIN_BINS)));
        }
        Ok(Self { v_min, v_max, m_v })
    }

    /// Range `[lo, hi]` widened by `margin` of its length on both sides, always containing 0.
    pub fn covering(lo: f64, hi: f64, margin: f64, m_v: usize) -> Result<Self> {
        let (lo, hi) = (lo.min(0.0), hi.max(0.0));
        let pad = margin * (hi - lo).max(1e-12);
        Self::new(lo - pad, hi + pad, m_v)
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / self.m_v as f64
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.v_min + k as f64 * self.dv()
    }

    pub fn center(&self, k: usize) -> f64 {
        self.v_min + (k as f64 + 0.5) * self.dv()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.m_v).map(|k| self.center(k)).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.v_min && v <= self.v_max
    }

    /// Half-open bins `[edge_k, edge_{k+1})`; `v_max` falls in the last bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        Some((((v - self.v_min) / self.dv()) as usize).min(self.m_v - 1))
    }

    fn bin_clamped(&self, v: f64) -> usize {
        (((v - self.v_min) / self.dv()).max(0.0) as usize).min(self.m_v - 1)
    }
}

/// `int eta(v) chi(u(x), v) dv` with `eta` piecewise constant on the bins.
pub fn velocity_average(u: &Field, velocity: &VelocityGrid, eta: &[f64]) -> Result<Field> {
    if eta.len() != velocity.m_v {
        return Err(Error::ShapeMismatch { expected: velocity.m_v, got: eta.len() });
    }
    if eta.iter().any(|e| !(e.abs() <= 1.0)) {
        return Err(Error::InvalidParameter("cutoff must satisfy |eta| <= 1".into()));
    }
    if !(velocity.contains(u.min()) && velocity.contains(u.max())) {
        return Err(Error::InvalidParameter("field range exceeds the velocity grid".into()));
    }
    u.map(|val| {
        eta.iter()
            .enumerate()
            .filter(|(_, e)| **e != 0.0)
            .map(|(k, e)| e * chi_overlap(val, velocity.edge(k), velocity.edge(k + 1)))
            .sum()
    })
}

/// Smooth step from 0 at `t <= 0` to 1 at `t >= 1`.
pub(crate) fn smooth_step(t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (f(t), f(1.0 - t));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Plateau {
    pub samples: Vec<f64>,
    /// `||eta'||_{L^1}` of the continuous profile.
    pub eta_prime_l1: f64,
}

/// Cutoff equal to 1 on `[a, b]`, decaying to 0 over `width` on each side, sampled at bin centers.
pub fn smooth_plateau(velocity: &VelocityGrid, a: f64, b: f64, width: f64) -> Result<Plateau> {
    if !(a <= b && width > 0.0) {
        return Err(Error::InvalidParameter("plateau needs a <= b and width > 0".into()));
    }
    let eta = |v: f64| smooth_step((v - a + width) / width) * smooth_step((b + width - v) / width);
    let samples = velocity.centers().into_iter().map(eta).collect();
    let deta = |v: f64| (eta(v + 1e-6 * width) - eta(v - 1e-6 * width)) / (2e-6 * width);
    let rule = Rule::new(16);
    let eta_prime_l1 = rule.integrate_panels(a - width, a, 32, |v| deta(v).abs())
        + rule.integrate_panels(b, b + width, 32, |v| deta(v).abs());
    Ok(Plateau { samples, eta_prime_l1 })
}

/// Kernel weight per lattice offset, shared with the operator quadrature.
#[derive(Clone, Debug)]
pub struct DissipationWeights {
    grid: Grid,
    kernel: KernelSpec,
    /// (offset in cells, offset vector, weight)
    cells: Vec<([i64; 2], [f64; 2], f64)>,
}

impl DissipationWeights {
    pub fn new(grid: Grid, kernel: &KernelSpec) -> Result<Self> {
        if grid.dim() != kernel.dim() {
            return Err(Error::GridMismatch);
        }
        let cells = lattice_weights(&grid, kernel, 0.0);
        Ok(Self { grid, kernel: kernel.clone(), cells })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `(offset in cells, offset vector, weight)` for every nonzero offset.
    pub fn cells(&self) -> &[([i64; 2], [f64; 2], f64)] {
        &self.cells
    }
}

/// Bin averages of `n(x, .)` at every grid point: `values[i * m_v + k]`.
#[derive(Clone, Debug)]
pub struct NDensity {
    pub velocity: VelocityGrid,
    pub values: Vec<f64>,
    grid: Grid,
}

impl NDensity {
    pub fn at(&self, point: usize, bin: usize) -> f64 {
        self.values[point * self.velocity.m_v + bin]
    }

    /// `int n(x, v) dx` per bin (bin averages in `v`).
    pub fn bin_totals(&self) -> Vec<f64> {
        let m = self.velocity.m_v;
        let w = self.grid.cell_weight();
        let mut out = vec![0.0; m];
        for row in self.values.chunks(m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        out
    }

    /// `int int n(x, v) dv dx`.
    pub fn total(&self) -> f64 {
        self.bin_totals().iter().sum::<f64>() * self.velocity.dv()
    }
}

/// `n(x, v) = int |Phi(u(x+y)) - Phi(v)| 1_{conv{u(x+y), u(x)}}(v) k(x, y) dy`, bin-averaged in `v`.
pub fn dissipation_n(
    u: &Field,
    velocity: &VelocityGrid,
    weights: &DissipationWeights,
    phi: &NonlinearitySpec,
) -> Result<NDensity> {
    let grid = *u.grid();
    if grid != weights.grid {
        return Err(Error::GridMismatch);
    }
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dissipation input"));
    }
    let m = velocity.m_v;
    let dv = velocity.dv();
    let psi_edges: Vec<f64> = (0..=m).map(|k| phi.primitive(velocity.edge(k))).collect();
    let vals = u.values();
    let phis: Vec<f64> = vals.iter().map(|&v| phi.phi(v)).collect();
    let psis: Vec<f64> = vals.iter().map(|&v| phi.primitive(v)).collect();
    let modulated = !weights.kernel.is_translation_invariant();
    let mut values = vec![0.0; grid.len() * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let ui = vals[i];
        let xi = grid.position(i);
        for (o, y, w) in &weights.cells {
            let j = grid.shifted(i, *o);
            let uj = vals[j];
            if uj == ui {
                continue;
            }
            let weight = if modulated { w * weights.kernel.factor(xi, *y) } else { *w };
            let (lo, hi) = if uj < ui { (uj, ui) } else { (ui, uj) };
            let (k_lo, k_hi) = (velocity.bin_clamped(lo), velocity.bin_clamped(hi));
            let (psi_lo, psi_hi) = if uj < ui { (psis[j], psis[i]) } else { (psis[i], psis[j]) };
            // int_a^b |Phi(uj) - Phi(v)| dv; the sign is fixed on conv{ui, uj}.
            for (k, r) in row.iter_mut().enumerate().take(k_hi + 1).skip(k_lo) {
                let (ea, eb) = (velocity.edge(k), velocity.edge(k + 1));
                let (a, psi_a) = if k == k_lo && lo > ea { (lo, psi_lo) } else { (ea, psi_edges[k]) };
                let (b, psi_b) = if k == k_hi && hi < eb { (hi, psi_hi) } else { (eb, psi_edges[k + 1]) };
                if b > a {
                    *r += weight * (phis[j] * (b - a) - (psi_b - psi_a)).abs() / dv;
                }
            }
        }
    });
    Ok(NDensity { velocity: *velocity, values, grid })
}

/// Adds `dt eps2 |grad u|^2` of `u` into the bin of `u(x)`; returns the number of clamped points.
fn accumulate_parabolic(bins: &mut [f64], u: &Field, grad_sq: &Field, eps2: f64, dt: f64, velocity: &VelocityGrid) -> usize {
    let w = u.grid().cell_weight() * eps2 * dt / velocity.dv();
    let mut clamped = 0;
    for (val, g) in u.values().iter().zip(grad_sq.values()) {
        if !velocity.contains(*val) {
            clamped += 1;
        }
        bins[velocity.bin_clamped(*val)] += w * g;
    }
    clamped
}

/// Binned `eps2 |grad u|^2` over a trajectory, each snapshot weighted by the time since the previous one.
pub fn dissipation_parabolic(traj: &Trajectory, eps2: f64, velocity: &VelocityGrid) -> Result<Vec<f64>> {
    let mut bins = vec![0.0; velocity.m_v];
    if eps2 == 0.0 {
        return Ok(bins);
    }
    for pair in traj.snapshots.windows(2) {
        let dt = pair[1].time().unwrap_or(0.0) - pair[0].time().unwrap_or(0.0);
        let g = crate::grid::gradient_norm_sq(&pair[1])?;
        accumulate_parabolic(&mut bins, &pair[1], &g, eps2, dt, velocity);
    }
    Ok(bins)
}

/// Bin averages of `mu(v) = 1_{v>0} ||(u0 - v)_+||_1 + 1_{v<0} ||(u0 - v)_-||_1`.
pub fn mu_bins(u0: &Field, velocity: &VelocityGrid) -> Vec<f64> {
    let w = u0.grid().cell_weight();
    let pos = |u: f64, a: f64, b: f64| 0.5 * ((u - a).max(0.0).powi(2) - (u - b).max(0.0).powi(2));
    let neg = |u: f64, a: f64, b: f64| 0.5 * ((b - u).max(0.0).powi(2) - (a - u).max(0.0).powi(2));
    (0..velocity.m_v)
        .map(|k| {
            let (a, b) = (velocity.edge(k), velocity.edge(k + 1));
            let s: f64 = u0
                .values()
                .iter()
                .map(|&u| {
                    let mut acc = 0.0;
                    if b > 0.0 {
                        acc += pos(u, a.max(0.0), b);
                    }
                    if a < 0.0 {
                        acc += neg(u, a, b.min(0.0));
                    }
                    acc
                })
                .sum();
            w * s / velocity.dv()
        })
        .collect()
}

/// Test function `theta(t) psi(x) zeta(v)` for the weak kinetic residual, built from smooth bumps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestBump {
    pub t: (f64, f64),
    pub x: ([f64; 2], f64),
    pub v: (f64, f64),
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn bump_prime(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let q = 1.0 - s * s;
        bump(s) * (-2.0 * s / (q * q))
    } else {
        0.0
    }
}

/// Running weak residual of the kinetic equation for one test function.
struct ResidualTerm {
    bump: TestBump,
    psi: Field,
    l_psi: Field,
    lap_psi: Field,
    /// Tabulated `Z(w) = int_0^w zeta`, `G(w) = int_0^w Phi' zeta` on `[lo, hi]`.
    table: (f64, f64, Vec<f64>, Vec<f64>),
    residual: f64,
    scale: f64,
}

impl ResidualTerm {
    fn new(b: TestBump, op: &OperatorHandle, phi: &NonlinearitySpec, velocity: &VelocityGrid) -> Result<Self> {
        let grid = *op.grid();
        let l = grid.length();
        let psi = Field::from_fn(grid, |x| {
            let mut r2 = 0.0;
            for (k, xk) in x.iter().enumerate().take(grid.dim()) {
                let d = (xk - b.x.0[k] + 0.5 * l).rem_euclid(l) - 0.5 * l;
                r2 += d * d;
            }
            bump(r2.sqrt() / b.x.1)
        })?;
        let l_psi = op.apply(&psi)?;
        let lap_psi = spectral_laplacian(&psi)?;
        let (lo, hi) = (velocity.v_min, velocity.v_max);
        let n = 8192;
        let h = (hi - lo) / n as f64;
        let zeta = |v: f64| bump((v - b.v.0) / b.v.1);
        let mut z = vec![0.0; n + 1];
        let mut g = vec![0.0; n + 1];
        let rule = Rule::new(4);
        for i in 0..n {
            let (a, c) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
            z[i + 1] = z[i] + rule.integrate(a, c, zeta);
            g[i + 1] = g[i] + rule.integrate(a, c, |v| phi.dphi(v) * zeta(v));
        }
        Ok(Self { bump: b, psi, l_psi, lap_psi, table: (lo, hi, z, g), residual: 0.0, scale: 0.0 })
    }

    /// Values of `Z` and `G` relative to `w = 0`.
    fn primitives(&self, w: f64) -> (f64, f64) {
        let (lo, hi, z, g) = &self.table;
        let n = z.len() - 1;
        let interp = |tab: &[f64], v: f64| {
            let s = ((v.clamp(*lo, *hi) - lo) / (hi - lo) * n as f64).min(n as f64 - 1e-9);
            let i = s as usize;
            let f = s - i as f64;
            tab[i] * (1.0 - f) + tab[i + 1] * f
        };
        (interp(z, w) - interp(z, 0.0), interp(g, w) - interp(g, 0.0))
    }

    fn observe(&mut self, step: &ObservedStep, eps2: f64, velocity: &VelocityGrid) {
        let b = self.bump;
        let theta = bump((step.t_prev - b.t.0) / b.t.1);
        let dtheta = bump_prime((step.t_prev - b.t.0) / b.t.1) / b.t.1;
        if theta == 0.0 && dtheta == 0.0 {
            return;
        }
        let grid = step.u_prev.grid();
        let w = grid.cell_weight();
        let (mut a, mut bb, mut c, mut s) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..grid.len() {
            let (z, g) = self.primitives(step.u_prev.values()[i]);
            a += w * self.psi.values()[i] * z;
            bb += w * self.l_psi.values()[i] * g;
            c += w * self.lap_psi.values()[i] * z;
            let zeta = bump((step.u_prev.values()[i] - b.v.0) / b.v.1);
            s += w * step.source.values()[i] * self.psi.values()[i] * zeta;
        }
        // q d_v phi: n from the density at t_prev, m at the new state.
        let mut q = 0.0;
        let dv = velocity.dv();
        let dzeta: Vec<f64> = velocity.centers().iter().map(|&v| bump_prime((v - b.v.0) / b.v.1) / b.v.1).collect();
        if let Some(nd) = step.n_density {
            for i in 0..grid.len() {
                let row: f64 = (0..velocity.m_v).map(|k| nd.at(i, k) * dzeta[k]).sum();
                q += w * self.psi.values()[i] * row * dv;
            }
        }
        if let Some(gs) = step.grad_sq {
            for i in 0..grid.len() {
                let v = step.u.values()[i];
                let dz = bump_prime((v - b.v.0) / b.v.1) / b.v.1;
                q += w * self.psi.values()[i] * eps2 * gs.values()[i] * dz;
            }
        }
        let terms = [-a * dtheta, theta * bb, -theta * eps2 * c, theta * q, -theta * s];
        self.residual += step.dt * terms.iter().sum::<f64>();
        self.scale += step.dt * terms.iter().map(|x| x.abs()).sum::<f64>();
    }
}

struct ObservedStep<'a> {
    t_prev: f64,
    dt: f64,
    u_prev: &'a Field,
    u: &'a Field,
    source: &'a Field,
    grad_sq: Option<&'a Field>,
    n_density: Option<&'a NDensity>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakResidual {
    pub test: TestBump,
    pub residual: f64,
    /// Sum of the absolute values of the individual terms.
    pub scale: f64,
    pub relative: f64,
}

/// Accumulates `n`, `m` (and optionally weak residuals) from solver steps.
pub struct LedgerRecorder {
    weights: DissipationWeights,
    phi: NonlinearitySpec,
    velocity: VelocityGrid,
    eps2: f64,
    n_stride: usize,
    step: usize,
    n_bins: Vec<f64>,
    m_bins: Vec<f64>,
    clamped: usize,
    residuals: Vec<ResidualTerm>,
    error: Option<Error>,
}

impl LedgerRecorder {
    /// `phi` must be the nonlinearity the solver advances (including any `eps3` shift).
    pub fn new(weights: DissipationWeights, phi: &NonlinearitySpec, velocity: VelocityGrid, eps2: f64) -> Self {
        let m = velocity.m_v;
        Self {
            weights,
            phi: phi.clone(),
            velocity,
            eps2,
            n_stride: 1,
            step: 0,
            n_bins: vec![0.0; m],
            m_bins: vec![0.0; m],
            clamped: 0,
            residuals: Vec::new(),
            error: None,
        }
    }

    /// Evaluates `n` every `stride` steps with weight `stride * dt`. Ignored when residuals are tracked.
    pub fn with_n_stride(mut self, stride: usize) -> Self {
        if self.residuals.is_empty() {
            self.n_stride = stride.max(1);
        }
        self
    }

    /// Tracks weak residuals; `op` must be the (L2-symmetric) operator of the run.
    pub fn with_residuals(mut self, tests: &[TestBump], op: &OperatorHandle) -> Result<Self> {
        self.n_stride = 1;
        for t in tests {
            self.residuals.push(ResidualTerm::new(*t, op, &self.phi, &self.velocity)?);
        }
        Ok(self)
    }

    pub fn observe(&mut self, info: &StepInfo) {
        if self.error.is_some() {
            return;
        }
        let sample_n = self.step.is_multiple_of(self.n_stride);
        self.step += 1;
        let mut nd = None;
        if sample_n {
            match dissipation_n(info.u_prev, &self.velocity, &self.weights, &self.phi) {
                Ok(d) => {
                    let w = info.dt * self.n_stride as f64;
                    for (b, v) in self.n_bins.iter_mut().zip(d.bin_totals()) {
                        *b += w * v;
                    }
                    self.clamped += info.u_prev.values().iter().filter(|v| !self.velocity.contains(**v)).count();
                    nd = Some(d);
                }
                Err(e) => {
                    self.error = Some(e);
                    return;
                }
            }
        }
        if let (Some(g), true) = (info.grad_sq, self.eps2 > 0.0) {
            self.clamped += accumulate_parabolic(&mut self.m_bins, info.u, g, self.eps2, info.dt, &self.velocity);
        }
        let step = ObservedStep {
            t_prev: info.t_prev,
            dt: info.dt,
            u_prev: info.u_prev,
            u: info.u,
            source: info.source,
            grad_sq: info.grad_sq,
            n_density: nd.as_ref(),
        };
        for r in &mut self.residuals {
            r.observe(&step, self.eps2, &self.velocity);
        }
    }

    pub fn finish(self, u0: &Field) -> Result<(DissipationLedger, Vec<WeakResidual>)> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let residuals = self
            .residuals
            .iter()
            .map(|r| WeakResidual {
                test: r.bump,
                residual: r.residual,
                scale: r.scale,
                relative: if r.scale > 0.0 { r.residual.abs() / r.scale } else { 0.0 },
            })
            .collect();
        let ledger = DissipationLedger {
            velocity: self.velocity,
            mu: mu_bins(u0, &self.velocity),
            n_bins: self.n_bins,
            m_bins: self.m_bins,
            clamped_points: self.clamped,
        };
        Ok((ledger, residuals))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipationLedger {
    pub velocity: VelocityGrid,
    pub n_bins: Vec<f64>,
    pub m_bins: Vec<f64>,
    /// Bin averages of `mu` from the initial data.
    pub mu: Vec<f64>,
    /// Grid values that fell outside the velocity range and were clamped to the end bins.
    pub clamped_points: usize,
}

impl DissipationLedger {
    pub fn q_bins(&self) -> Vec<f64> {
        self.n_bins.iter().zip(&self.m_bins).map(|(n, m)| n + m).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "v_center,n,m,q,mu")?;
        for k in 0..self.velocity.m_v {
            let (n, m) = (self.n_bins[k], self.m_bins[k]);
            writeln!(w, "{},{},{},{},{}", self.velocity.center(k), n, m, n + m, self.mu[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QBoundReport {
    pub slack: f64,
    pub source_l1: f64,
    pub violations: Vec<usize>,
    /// Largest `q / (mu + ||S||_1)` over bins where the bound is positive.
    pub worst_ratio: f64,
    pub q_bound_holds: bool,
    pub sup_l1: f64,
    pub l1_bound: f64,
    pub l1_bound_holds: bool,
    /// With a zero source: `||u(t)||_1 <= 1.01 ||u0||_1` for all recorded times.
    pub l1_nonincreasing: Option<bool>,
}

/// Checks `q_bins <= (mu + ||S||_1)(1 + slack)` per bin and `sup_t ||u||_1 <= ||u0||_1 + 3 ||S||_1`.
pub fn q_bound_check(
    ledger: &DissipationLedger,
    traj: &Trajectory,
    u0: &Field,
    source: &Source,
    t_final: f64,
    dt: f64,
    slack: f64,
) -> QBoundReport {
    let s1 = source.l1_spacetime(t_final, dt, *u0.grid());
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, (q, mu)) in ledger.q_bins().iter().zip(&ledger.mu).enumerate() {
        let bound = mu + s1;
        if *q < 0.0 || *q > bound * (1.0 + slack) {
            violations.push(k);
        }
        if bound > 0.0 {
            worst = worst.max(q / bound);
        }
    }
    let sup_l1 = traj.diagnostics.iter().map(|d| d.l1).fold(0.0, f64::max);
    let u0_l1 = u0.l1_norm();
    let l1_bound = u0_l1 + 3.0 * s1;
    QBoundReport {
        slack,
        source_l1: s1,
        q_bound_holds: violations.is_empty(),
        violations,
        worst_ratio: worst,
        sup_l1,
        l1_bound,
        l1_bound_holds: sup_l1 <= l1_bound * (1.0 + 1e-12),
        l1_nonincreasing: source.is_zero().then(|| traj.diagnostics.iter().all(|d| d.l1 <= 1.01 * u0_l1)),
    }
}
