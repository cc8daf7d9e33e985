//! Self-similar (Barenblatt-type) solutions `u(t, x) = t^-alpha f(|x| t^-beta)`, the scaling
//! group of the equation and reference solutions for solver validation.
//!
//! If `u` solves `u_t + L u^[m] = 0` with `L` of order `a`, then `A u(lambda t, nu x)` solves it
//! iff `lambda = A^{m-1} nu^a`. The time-fixed subfamily `A = nu^{-a/(m-1)}` (`lambda = 1`)
//! is the one along which `||u^[mu]||^p_{L^p_t W^{sigma,p}_x} / ||u0||_1` changes by
//! `nu^{sigma p - (mu p - 1) a / (m - 1)}`.

use crate::error::{Error, Result};
use crate::grid::{spectral_laplacian, transform_forward, Field, Grid};
use crate::nonlinearity::NonlinearitySpec;
use crate::norms::slobodeckii_seminorm;
use crate::operator::OperatorHandle;
use crate::solver::{solve, SolverConfig, Trajectory};
use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;

/// `(alpha, beta)` with `alpha = d / (d(m-1) + a)`, `beta = alpha / d`.
pub fn exponents(d: usize, m: f64, a: f64) -> Result<(f64, f64)> {
    if !(m > 1.0) || !(a > 0.0 && a <= 2.0) || d == 0 {
        return Err(Error::InvalidParameter(format!("exponents need m > 1, a in (0, 2], d >= 1 (m={m}, a={a})")));
    }
    let d = d as f64;
    let alpha = d / (d * (m - 1.0) + a);
    Ok((alpha, alpha / d))
}

/// Unit of the scaling group: `A u(lambda t, nu x)` with `lambda = A^{m-1} nu^a`.
pub fn time_factor(m: f64, a: f64, amplitude: f64, nu: f64) -> f64 {
    amplitude.powf(m - 1.0) * nu.powf(a)
}

/// Amplitude of the time-fixed scaling family.
pub fn time_fixed_amplitude(m: f64, a: f64, nu: f64) -> f64 {
    nu.powf(-a / (m - 1.0))
}

/// Regularity exponent at which the scaled estimate is neutral along the time-fixed family.
pub fn neutral_sigma(m: f64, a: f64, p: f64, mu_power: f64) -> f64 {
    (mu_power * p - 1.0) / p * a / (m - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SelfSimilarSpec {
    pub d: usize,
    pub m: f64,
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mass: f64,
}

impl SelfSimilarSpec {
    pub fn new(d: usize, m: f64, a: f64, mass: f64) -> Result<Self> {
        let (alpha, beta) = exponents(d, m, a)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter("mass must be positive".into()));
        }
        Ok(Self { d, m, a, alpha, beta, mass })
    }
}

/// Closed-form solution of the local problem `u_t = Delta u^m`:
/// `u = t^-alpha (C - kappa |x|^2 t^{-2 beta})_+^{1/(m-1)}`, `kappa = alpha (m-1) / (2 d m)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Zkb {
    pub spec: SelfSimilarSpec,
    pub c: f64,
    pub kappa: f64,
}

impl Zkb {
    pub fn new(d: usize, m: f64, mass: f64) -> Result<Self> {
        if d > 2 {
            return Err(Error::InvalidParameter("closed form implemented for d <= 2".into()));
        }
        let spec = SelfSimilarSpec::new(d, m, 2.0, mass)?;
        let q = 1.0 / (m - 1.0);
        let kappa = spec.alpha * (m - 1.0) / (2.0 * d as f64 * m);
        // mass = C^{q + d/2} kappa^{-d/2} K_d
        let k_d = if d == 1 {
            libm::tgamma(0.5) * libm::tgamma(q + 1.0) / libm::tgamma(q + 1.5)
        } else {
            std::f64::consts::PI / (q + 1.0)
        };
        let c = (mass * kappa.powf(0.5 * d as f64) / k_d).powf(1.0 / (q + 0.5 * d as f64));
        Ok(Self { spec, c, kappa })
    }

    pub fn from_spec(spec: &SelfSimilarSpec) -> Result<Self> {
        if spec.a != 2.0 {
            return Err(Error::InvalidParameter(format!("closed form needs a = 2, got {}", spec.a)));
        }
        Self::new(spec.d, spec.m, spec.mass)
    }

    pub fn profile(&self, r: f64) -> f64 {
        (self.c - self.kappa * r * r).max(0.0).powf(1.0 / (self.spec.m - 1.0))
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.kappa).sqrt() * t.powf(self.spec.beta)
    }

    pub fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        let r = if self.spec.d == 1 { x[0].abs() } else { x[0].hypot(x[1]) };
        t.powf(-self.spec.alpha) * self.profile(r * t.powf(-self.spec.beta))
    }

    pub fn field(&self, t: f64, grid: Grid) -> Result<Field> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter("t must be positive".into()));
        }
        if grid.dim() != self.spec.d {
            return Err(Error::GridMismatch);
        }
        Ok(Field::from_fn(grid, |x| self.value(t, x))?.with_time(t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// `sup |u_t - Delta u^m|` away from the free boundary.
    pub sup_residual: f64,
    /// `sup |u_t|` over the same set, for scale.
    pub sup_time_derivative: f64,
    pub collar_cells: usize,
}

/// Residual of `u_t - Delta u^m` for the closed form: centered difference in time,
/// spectral Laplacian in space, excluding `collar_cells` around the support edge.
pub fn zkb_residual(z: &Zkb, t: f64, dt: f64, grid: Grid, collar_cells: usize) -> Result<ResidualReport> {
    let (before, after) = (z.field(t - dt, grid)?, z.field(t + dt, grid)?);
    let now = z.field(t, grid)?;
    let lap = spectral_laplacian(&now.map(|v| v.powf(z.spec.m))?)?;
    let edge = z.support_radius(t);
    let band = collar_cells as f64 * grid.spacing();
    let (mut res, mut scale): (f64, f64) = (0.0, 0.0);
    for i in 0..grid.len() {
        let x = grid.position(i);
        let r = if grid.dim() == 1 { x[0].abs() } else { x[0].hypot(x[1]) };
        if (r - edge).abs() <= band {
            continue;
        }
        let ut = (after.values()[i] - before.values()[i]) / (2.0 * dt);
        res = res.max((ut - lap.values()[i]).abs());
        scale = scale.max(ut.abs());
    }
    Ok(ResidualReport { sup_residual: res, sup_time_derivative: scale, collar_cells })
}

/// Tabulated radial profile `v(y) = t^alpha u(t, y t^beta)` on the axis `y >= 0`.
#[derive(Clone, Debug, Serialize)]
pub struct Profile {
    pub spec: SelfSimilarSpec,
    pub t_end: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// `||v_{t_end} - v_{t_end/2}||_1 / ||v_{t_end}||_1` on the rescaled axis.
    pub gap: f64,
    /// Whole-space mass of the rescaled profile.
    pub mass: f64,
    /// Largest `|v(y) - v(-y)|`.
    pub asymmetry: f64,
    pub converged: bool,
}

impl Profile {
    pub const GAP_THRESHOLD: f64 = 0.03;

    /// Linear interpolation; zero beyond the table.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.y.iter().position(|&y| y > r) {
            Some(0) => self.v[0],
            Some(i) => {
                let f = (r - self.y[i - 1]) / (self.y[i] - self.y[i - 1]);
                self.v[i - 1] * (1.0 - f) + self.v[i] * f
            }
            None => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "y,v")?;
        for (y, v) in self.y.iter().zip(&self.v) {
            writeln!(w, "{y},{v}")?;
        }
        Ok(())
    }
}

/// Trigonometric interpolation of `f` at arbitrary points (d = 1).
fn interpolate_1d(f: &Field, points: &[f64]) -> Vec<f64> {
    let grid = *f.grid();
    let spec = transform_forward(f);
    let x0 = -0.5 * grid.length();
    points
        .iter()
        .map(|&x| {
            spec.coeffs()
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let xi = grid.wavevector(k)[0];
                    if grid.is_nyquist(k) {
                        (xi * (x - x0)).cos() * c.re
                    } else {
                        (c * Complex64::from_polar(1.0, xi * (x - x0))).re
                    }
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ProfileConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Width of the initial unit-mass bump.
    pub bump_radius: f64,
    /// Rescaled axis `[0, y_max]` with `samples` points.
    pub y_max: f64,
    pub samples: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { t_end: 16.0, dt: 1e-3, bump_radius: 1.0, y_max: 4.0, samples: 200 }
    }
}

/// Evolves a unit-mass bump with the spectral fractional solver (d = 1) and rescales it.
pub fn numerical_profile(spec: &SelfSimilarSpec, grid: Grid, cfg: &ProfileConfig) -> Result<Profile> {
    if grid.dim() != 1 || spec.d != 1 {
        return Err(Error::InvalidParameter("numerical profiles are tabulated for d = 1".into()));
    }
    let op = OperatorHandle::spectral_fractional(grid, spec.a)?;
    let phi = NonlinearitySpec::power(spec.m)?;
    let r0 = cfg.bump_radius;
    let shape = Field::from_fn(grid, |x| {
        let s = x[0] / r0;
        if s.abs() < 1.0 {
            (1.0 - s * s).powi(3)
        } else {
            0.0
        }
    })?;
    let u0 = shape.map(|v| v * spec.mass / shape.integral())?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let solver_cfg = SolverConfig {
        dt: cfg.dt,
        t_final: cfg.t_end,
        snapshot_stride: (steps / 2).max(1),
        lp_exponents: vec![],
        ..Default::default()
    };
    let traj = solve(&u0, &solver_cfg, &op, &phi)?;
    let (alpha, beta) = (spec.alpha, spec.beta);
    let ys: Vec<f64> = (0..cfg.samples).map(|i| cfg.y_max * i as f64 / (cfg.samples - 1) as f64).collect();
    let rescaled = |t: f64| -> Result<Vec<f64>> {
        let f = traj.snapshot_at(t)?;
        let pts: Vec<f64> = ys.iter().map(|y| y * t.powf(beta)).collect();
        Ok(interpolate_1d(f, &pts).into_iter().map(|v| v * t.powf(alpha)).collect())
    };
    let v_end = rescaled(cfg.t_end)?;
    let v_half = rescaled(0.5 * cfg.t_end)?;
    let dy = ys[1] - ys[0];
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() * dy;
    let gap = v_end.iter().zip(&v_half).map(|(a, b)| (a - b).abs()).sum::<f64>() * dy / l1(&v_end);
    let last = traj.final_field();
    let mass = last.integral();
    let n = grid.n();
    let asymmetry = (1..n / 2).map(|i| (last.values()[n / 2 + i] - last.values()[n / 2 - i]).abs()).fold(0.0, f64::max)
        * cfg.t_end.powf(alpha);
    Ok(Profile {
        spec: *spec,
        t_end: cfg.t_end,
        y: ys,
        v: v_end,
        gap,
        mass,
        asymmetry,
        converged: gap <= Profile::GAP_THRESHOLD,
    })
}

/// `A f(nu x)` on the same grid. Powers of two `nu >= 1` remap indices exactly; other
/// factors use trigonometric interpolation, rejected if the field is under-resolved.
pub fn rescale_field(f: &Field, amplitude: f64, nu: f64, tol: f64) -> Result<Field> {
    let grid = *f.grid();
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter("nu must be positive".into()));
    }
    let n = grid.n() as i64;
    let exact = nu >= 1.0 && (nu.log2().fract() == 0.0);
    if exact {
        let s = nu as i64;
        // Points mapped outside the box see the zero extension.
        let remap = |i: usize| {
            let k = s * i as i64 - (s - 1) * n / 2;
            (0..n).contains(&k).then_some(k as usize)
        };
        let vals = (0..grid.len())
            .map(|flat| {
                let [i, j] = grid.unravel(flat);
                let idx = if grid.dim() == 1 { remap(i).map(|a| [a, 0]) } else { remap(i).zip(remap(j)).map(|(a, b)| [a, b]) };
                idx.map_or(0.0, |idx| amplitude * f.values()[grid.ravel(idx)])
            })
            .collect();
        return Field::new(grid, vals);
    }
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("non-dyadic rescaling implemented for d = 1".into()));
    }
    // Resolution check: spectral energy in the top quarter of the band.
    let spec = transform_forward(f);
    let total: f64 = spec.coeffs().iter().map(|c| c.norm_sqr()).sum();
    let nyq = grid.nyquist();
    let top: f64 = spec
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(k, _)| grid.wavevector_norm(*k) > 0.75 * nyq / nu.max(1.0))
        .map(|(_, c)| c.norm_sqr())
        .sum();
    let err = if total > 0.0 { (top / total).sqrt() } else { 0.0 };
    if err > tol {
        return Err(Error::Resampling { err, tol });
    }
    let half = 0.5 * grid.length();
    let pts: Vec<f64> = (0..grid.len()).map(|i| nu * grid.position(i)[0]).collect();
    let vals = interpolate_1d(f, &pts)
        .into_iter()
        .zip(&pts)
        .map(|(v, x)| if x.abs() < half { amplitude * v } else { 0.0 })
        .collect();
    Field::new(grid, vals)
}

/// `A u(lambda t, nu x)` from a trajectory holding a snapshot at `lambda t`.
pub fn rescale(traj: &Trajectory, t: f64, lambda: f64, amplitude: f64, nu: f64) -> Result<Field> {
    let src = traj.snapshot_at(lambda * t)?;
    Ok(rescale_field(src, amplitude, nu, 1e-6)?.with_time(t))
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub nu: f64,
    pub p: f64,
    pub mu_power: f64,
    pub predicted: f64,
    pub sigmas: Vec<f64>,
    /// `log_nu` of the change of `N_sigma / ||u0||_1` between the two trajectories.
    pub drifts: Vec<f64>,
    /// Root of the linear fit of drift against sigma.
    pub sigma_min: f64,
    pub slope: f64,
}

/// `int_0^T ||w(t)^[mu]||^p_{W^{sigma,p}} dt` by the trapezoid rule on the snapshots.
fn time_integrated_seminorm(traj: &Trajectory, sigma: f64, p: f64, mu_power: f64) -> Result<f64> {
    let mut vals = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let w = s.map(|v| v.abs().powf(mu_power) * v.signum())?;
        vals.push((s.time().unwrap_or(0.0), slobodeckii_seminorm(&w, sigma, p)?.powf(p)));
    }
    Ok(vals.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum())
}

/// Compares `original` with `scaled` (the solution from `A u0(nu x)`) over `sigmas`.
#[allow(clippy::too_many_arguments)]
pub fn scaling_drift(
    original: &Trajectory,
    scaled: &Trajectory,
    nu: f64,
    m: f64,
    a: f64,
    p: f64,
    mu_power: f64,
    sigmas: &[f64],
) -> Result<DriftReport> {
    let m0 = original.snapshots[0].l1_norm();
    let m1 = scaled.snapshots[0].l1_norm();
    let mut drifts = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let n0 = time_integrated_seminorm(original, s, p, mu_power)?;
        let n1 = time_integrated_seminorm(scaled, s, p, mu_power)?;
        drifts.push(((n1 / m1) / (n0 / m0)).ln() / nu.ln());
    }
    let k = sigmas.len() as f64;
    let (sx, sy) = (sigmas.iter().sum::<f64>() / k, drifts.iter().sum::<f64>() / k);
    let sxy: f64 = sigmas.iter().zip(&drifts).map(|(x, y)| (x - sx) * (y - sy)).sum();
    let sxx: f64 = sigmas.iter().map(|x| (x - sx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(DriftReport {
        nu,
        p,
        mu_power,
        predicted: neutral_sigma(m, a, p, mu_power),
        sigmas: sigmas.to_vec(),
        drifts,
        sigma_min: sx - sy / slope,
        slope,
    })
}
