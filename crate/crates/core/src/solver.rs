//! Time stepping of `u_t + L^{eps1} Phi^{eps3}(u) = eps2 Delta u + S` on a torus grid.
//!
//! The IMEX scheme advances spectral coefficients by
//! `u_{n+1} = (u_n - dt F[L Phi(u_n)] + dt F[S(t_n)]) / (1 + dt eps2 |xi|^2)`;
//! the explicit scheme is forward Euler on every term. Both require
//! `dt <= cfl_safety / (sup Phi'(range) max_xi p(xi) + [explicit] eps2 max |xi|^2)`.

use crate::error::{Error, Result};
use crate::grid::{gradient_norm_sq, transform_forward, transform_inverse, Field, Grid};
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::OperatorHandle;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

pub const BLOWUP_FACTOR: f64 = 1.0e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImexSpectral,
    Explicit,
}

/// Source term `S(t, x)`.
#[derive(Clone)]
pub enum Source {
    Zero,
    Steady(Field),
    /// `field` on `[start, end)`, zero otherwise.
    Window { field: Field, start: f64, end: f64 },
    Function(Arc<dyn Fn(f64) -> Field + Send + Sync>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Steady(_) => write!(f, "Steady(..)"),
            Source::Window { start, end, .. } => write!(f, "Window {{ start: {start}, end: {end} }}"),
            Source::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Source {
    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }

    pub fn at(&self, t: f64, grid: Grid) -> Field {
        match self {
            Source::Zero => Field::zeros(grid),
            Source::Steady(f) => f.clone(),
            Source::Window { field, start, end } => {
                if t >= *start && t < *end {
                    field.clone()
                } else {
                    Field::zeros(grid)
                }
            }
            Source::Function(f) => f(t),
        }
    }

    /// `int_0^T ||S(t)||_p^p dt` by the left-point rule on the step grid.
    pub fn lp_spacetime_pow(&self, p: f64, t_final: f64, dt: f64, grid: Grid) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Steady(f) => t_final * f.lp_norm(p).powf(p),
            Source::Window { field, start, end } => {
                (end.min(t_final) - start.max(0.0)).max(0.0) * field.lp_norm(p).powf(p)
            }
            Source::Function(_) => {
                let steps = (t_final / dt).round() as usize;
                (0..steps).map(|n| dt * self.at(n as f64 * dt, grid).lp_norm(p).powf(p)).sum()
            }
        }
    }

    /// `int_0^T ||S(t)||_1 dt`.
    pub fn l1_spacetime(&self, t_final: f64, dt: f64, grid: Grid) -> f64 {
        self.lp_spacetime_pow(1.0, t_final, dt, grid)
    }

    /// Largest `||S(t)||_inf` over the run.
    fn sup_bound(&self, t_final: f64, dt: f64, grid: Grid) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Steady(f) | Source::Window { field: f, .. } => f.sup_norm(),
            Source::Function(_) => {
                let steps = (t_final / dt).round() as usize;
                (0..=steps).map(|n| self.at(n as f64 * dt, grid).sup_norm()).fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub source: Source,
    pub cfl_safety: f64,
    /// Keep every `snapshot_stride`-th step (the initial and final fields are always kept).
    pub snapshot_stride: usize,
    /// Extra `L^p` norms recorded in the diagnostics.
    pub lp_exponents: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps1: 0.0,
            eps2: 0.0,
            eps3: 0.0,
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::ImexSpectral,
            source: Source::Zero,
            cfl_safety: 0.9,
            snapshot_stride: usize::MAX,
            lp_exponents: vec![2.0],
        }
    }
}

impl SolverConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_final >= self.dt) {
            return bad("T must be at least dt");
        }
        if ((self.t_final / self.dt).round() * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return bad("T must be an integer multiple of dt");
        }
        if self.eps1 < 0.0 || self.eps2 < 0.0 || self.eps3 < 0.0 {
            return bad("regularization parameters must be >= 0");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    /// `(p, ||u||_p)` for every configured exponent.
    pub lp: Vec<(f64, f64)>,
    /// `eps2 int_0^t int |grad u|^2`.
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub diagnostics: Vec<Diagnostics>,
    pub dt_max: f64,
}

impl Trajectory {
    pub fn final_field(&self) -> &Field {
        self.snapshots.last().expect("trajectory keeps the final field")
    }

    pub fn snapshot_at(&self, t: f64) -> Result<&Field> {
        self.snapshots
            .iter()
            .find(|f| f.time().is_some_and(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)))
            .ok_or(Error::MissingSnapshot(t))
    }

    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let ps: Vec<f64> = self.diagnostics.first().map(|d| d.lp.iter().map(|x| x.0).collect()).unwrap_or_default();
        write!(w, "t,mass,l1")?;
        for p in &ps {
            write!(w, ",l{p}")?;
        }
        writeln!(w, ",energy")?;
        for d in &self.diagnostics {
            write!(w, "{},{},{}", d.t, d.mass, d.l1)?;
            for (_, v) in &d.lp {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", d.energy)?;
        }
        Ok(())
    }
}

/// Data handed to step observers.
pub struct StepInfo<'a> {
    pub t_prev: f64,
    pub t: f64,
    pub dt: f64,
    pub u_prev: &'a Field,
    pub u: &'a Field,
    pub source: &'a Field,
    /// `|grad u|^2` of the new state when `eps2 > 0`.
    pub grad_sq: Option<&'a Field>,
}

fn effective_phi(phi: &NonlinearitySpec, eps3: f64) -> Result<NonlinearitySpec> {
    if eps3 > 0.0 {
        NonlinearitySpec::shifted(phi, eps3)
    } else {
        Ok(phi.clone())
    }
}

/// `sup Phi'` over `[lo, hi]` by dense sampling.
fn sup_dphi(phi: &NonlinearitySpec, lo: f64, hi: f64) -> f64 {
    let n = 256;
    (0..=n)
        .map(|i| phi.dphi(lo + (hi - lo) * i as f64 / n as f64))
        .chain([phi.dphi(0.0_f64.clamp(lo, hi))])
        .fold(0.0, f64::max)
}

fn dt_max(
    phi: &NonlinearitySpec,
    op: &OperatorHandle,
    cfg: &SolverConfig,
    lo: f64,
    hi: f64,
) -> f64 {
    let grid = op.grid();
    let mut rate = sup_dphi(phi, lo, hi) * op.max_multiplier();
    if cfg.scheme == Scheme::Explicit {
        rate += cfg.eps2 * grid.max_wavevector_norm().powi(2);
    }
    if rate > 0.0 {
        cfg.cfl_safety / rate
    } else {
        f64::INFINITY
    }
}

fn diagnostics(u: &Field, t: f64, ps: &[f64], energy: f64) -> Diagnostics {
    Diagnostics {
        t,
        mass: u.integral(),
        l1: u.l1_norm(),
        lp: ps.iter().map(|&p| (p, u.lp_norm(p))).collect(),
        energy,
    }
}

pub fn solve(u0: &Field, cfg: &SolverConfig, op: &OperatorHandle, phi: &NonlinearitySpec) -> Result<Trajectory> {
    solve_observed(u0, cfg, op, phi, |_| {})
}

/// As [`solve`], calling `observer` after every step.
pub fn solve_observed(
    u0: &Field,
    cfg: &SolverConfig,
    op: &OperatorHandle,
    phi: &NonlinearitySpec,
    mut observer: impl FnMut(&StepInfo),
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = *op.grid();
    if *u0.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let phi = effective_phi(phi, cfg.eps3)?;
    let steps = cfg.steps();
    let s_sup = cfg.source.sup_bound(cfg.t_final, cfg.dt, grid);
    let drift = cfg.t_final * s_sup;
    let (lo0, hi0) = (u0.min() - drift, u0.max() + drift);
    let dt_limit = dt_max(&phi, op, cfg, lo0, hi0);
    if cfg.dt > dt_limit {
        return Err(Error::CflViolation { dt: cfg.dt, dt_max: dt_limit });
    }
    let threshold = BLOWUP_FACTOR * (u0.sup_norm() + drift).max(f64::MIN_POSITIVE);
    let damping: Vec<f64> = match cfg.scheme {
        Scheme::ImexSpectral => (0..grid.len())
            .map(|k| 1.0 / (1.0 + cfg.dt * cfg.eps2 * grid.wavevector_norm(k).powi(2)))
            .collect(),
        Scheme::Explicit => vec![],
    };
    let lap = OperatorHandle::laplacian(grid);

    let mut u = u0.clone().with_time(0.0);
    let mut energy = 0.0;
    let mut traj = Trajectory {
        snapshots: vec![u.clone()],
        diagnostics: vec![diagnostics(&u, 0.0, &cfg.lp_exponents, 0.0)],
        dt_max: dt_limit,
    };
    for n in 0..steps {
        let t_prev = n as f64 * cfg.dt;
        let t = (n + 1) as f64 * cfg.dt;
        let s = cfg.source.at(t_prev, grid);
        let phi_u = u.map(|v| phi.phi(v))?;
        let next = match cfg.scheme {
            Scheme::ImexSpectral => {
                let mut uh = transform_forward(&u);
                let s_hat = transform_forward(&s);
                let rhs = match op.multiplier() {
                    Some(m) => {
                        let mut ph = transform_forward(&phi_u);
                        ph.coeffs_mut().iter_mut().zip(m).for_each(|(c, w)| *c *= *w);
                        ph
                    }
                    None => transform_forward(&op.apply(&phi_u)?),
                };
                for (k, c) in uh.coeffs_mut().iter_mut().enumerate() {
                    *c = (*c - rhs.coeffs()[k] * cfg.dt + s_hat.coeffs()[k] * cfg.dt) * damping[k];
                }
                transform_inverse(&uh, &grid)?
            }
            Scheme::Explicit => {
                let lphi = op.apply(&phi_u)?;
                let visc = if cfg.eps2 > 0.0 { lap.viscous(&u, cfg.eps2)? } else { Field::zeros(grid) };
                let vals = (0..grid.len())
                    .map(|i| {
                        u.values()[i] + cfg.dt * (-lphi.values()[i] + visc.values()[i] + s.values()[i])
                    })
                    .collect();
                Field::new(grid, vals)?
            }
        }
        .with_time(t);

        let sup = next.sup_norm();
        if !(sup <= threshold) {
            return Err(Error::BlowUp { time: t, sup, threshold });
        }
        let limit = dt_max(&phi, op, cfg, next.min().min(lo0), next.max().max(hi0));
        if cfg.dt > limit {
            return Err(Error::CflViolation { dt: cfg.dt, dt_max: limit });
        }
        let grad_sq = if cfg.eps2 > 0.0 { Some(gradient_norm_sq(&next)?) } else { None };
        if let Some(g) = &grad_sq {
            energy += cfg.dt * cfg.eps2 * g.integral();
        }
        observer(&StepInfo { t_prev, t, dt: cfg.dt, u_prev: &u, u: &next, source: &s, grad_sq: grad_sq.as_ref() });
        traj.diagnostics.push(diagnostics(&next, t, &cfg.lp_exponents, energy));
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            traj.snapshots.push(next.clone());
        }
        u = next;
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `||u0^1 - u0^2||_1 + int_0^t ||S^1 - S^2||_1` at each time.
    pub bounds: Vec<f64>,
    pub slack: f64,
    pub bound_holds: bool,
    /// Largest `gap(t) / min_{s < t} gap(s)`; meaningful for equal sources.
    pub max_growth: f64,
}

/// Runs both problems and records `||u^1(t) - u^2(t)||_1`.
pub fn l1_contraction_check(
    u0: (&Field, &Field),
    sources: (&Source, &Source),
    cfg: &SolverConfig,
    op: &OperatorHandle,
    phi: &NonlinearitySpec,
) -> Result<ContractionReport> {
    let grid = *op.grid();
    let mut c1 = cfg.clone();
    c1.source = sources.0.clone();
    c1.snapshot_stride = 1;
    let mut c2 = c1.clone();
    c2.source = sources.1.clone();
    let (t1, t2) = rayon::join(|| solve(u0.0, &c1, op, phi), || solve(u0.1, &c2, op, phi));
    let (t1, t2) = (t1?, t2?);
    let base = u0.0.zip_with(u0.1, |a, b| a - b)?.l1_norm();
    let mut times = Vec::new();
    let mut gaps = Vec::new();
    let mut bounds = Vec::new();
    let mut src_acc = 0.0;
    for (a, b) in t1.snapshots.iter().zip(&t2.snapshots) {
        let t = a.time().unwrap_or(0.0);
        times.push(t);
        gaps.push(a.zip_with(b, |x, y| x - y)?.l1_norm());
        bounds.push(base + src_acc);
        let diff = sources.0.at(t, grid).zip_with(&sources.1.at(t, grid), |x, y| x - y)?;
        src_acc += cfg.dt * diff.l1_norm();
    }
    let slack = 0.02;
    let bound_holds = gaps.iter().zip(&bounds).all(|(g, b)| *g <= b * (1.0 + slack) + 1e-14);
    let mut running_min = f64::INFINITY;
    let mut max_growth: f64 = 0.0;
    for &g in &gaps {
        if running_min.is_finite() && running_min > 0.0 {
            max_growth = max_growth.max(g / running_min);
        }
        running_min = running_min.min(g);
    }
    Ok(ContractionReport { times, gaps, bounds, slack, bound_holds, max_growth })
}

#[derive(Clone, Debug, Serialize)]
pub struct LpReport {
    pub p: f64,
    pub sup_norm_pow: f64,
    pub data_pow: f64,
    /// `sup_t ||u(t)||_p^p / (||u0||_p^p + ||S||_p^p)`.
    pub k: f64,
    /// For zero sources: `||u(t)||_p` never rises more than 1% above its running minimum.
    pub nonincreasing: Option<bool>,
}

pub fn lp_estimate_check(traj: &Trajectory, p: f64, u0: &Field, source: &Source, t_final: f64, dt: f64) -> Result<LpReport> {
    let series: Vec<f64> = traj
        .diagnostics
        .iter()
        .map(|d| d.lp.iter().find(|x| (x.0 - p).abs() < 1e-12).map(|x| x.1))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidParameter(format!("diagnostics do not record p = {p}")))?;
    let sup_pow = series.iter().map(|v| v.powf(p)).fold(0.0, f64::max);
    let data_pow = u0.lp_norm(p).powf(p) + source.lp_spacetime_pow(p, t_final, dt, *u0.grid());
    let k = if data_pow > 0.0 { sup_pow / data_pow } else { 0.0 };
    let nonincreasing = source.is_zero().then(|| {
        let mut min = f64::INFINITY;
        series.iter().all(|&v| {
            let ok = v <= min * 1.01 || !min.is_finite();
            min = min.min(v);
            ok
        })
    });
    Ok(LpReport { p, sup_norm_pow: sup_pow, data_pow, k, nonincreasing })
}
