//! Application of `L`, its truncation `L^{eps1}` and the viscous Laplacian on a torus grid.
//!
//! Quadrature mode discretizes
//! `L f(x) = -int_{|y| > eps1} (f(x+y) - f(x) - 1_{a >= 1} 1_{|y| <= 2} grad f(x).y) k(x,y) dy`
//! by lattice offsets. Each offset cell carries `int_cell |y|^2 k0 / |y_j|^2` (exact for the
//! quadratic part of `f`), periodic images carry their zeroth moments, and the remainder
//! beyond the image window is spread uniformly. The central cell is replaced by its
//! second-order Taylor expansion using spectral derivatives.

use crate::error::{Error, Result};
use crate::grid::{spectral_derivative, spectral_laplacian, transform_forward, transform_inverse, Field, Grid};
use crate::kernels::{KernelKind, KernelSpec};
use crate::quadrature::Rule;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Image cells in each direction with explicit zeroth-moment weights.
pub(crate) const IMAGES_1D: i64 = 64;
pub(crate) const IMAGES_2D: i64 = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorMode {
    /// Multiplier `|xi|^a`.
    SpectralFractional { a: f64 },
    /// Multiplier `p(xi)` of an x-independent kernel from the symbol quadrature.
    SpectralSymbol { a: f64 },
    /// Truncated kernel `k 1_{|y| > eps1}` by lattice quadrature.
    KernelQuadrature { eps1: f64 },
    /// `-Delta`, multiplier `|xi|^2`.
    Laplacian,
}

#[derive(Clone, Debug)]
struct QuadratureTable {
    /// (offset in cells, offset vector, local weight, image weight)
    cells: Vec<([i64; 2], [f64; 2], f64, f64)>,
    /// `int_{C0 \ B_eps1} |y|^2 k0`.
    central_m2: f64,
    compensated: bool,
    k_bound: f64,
}

#[derive(Clone, Debug)]
pub struct OperatorHandle {
    grid: Grid,
    mode: OperatorMode,
    kernel: Option<KernelSpec>,
    multiplier: Option<Vec<f64>>,
    table: Option<QuadratureTable>,
}

impl OperatorHandle {
    pub fn spectral_fractional(grid: Grid, a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::InvalidParameter(format!("spectral order a = {a} outside (0, 2]")));
        }
        let mult = (0..grid.len()).map(|k| grid.wavevector_norm(k).powf(a)).collect();
        Ok(Self { grid, mode: OperatorMode::SpectralFractional { a }, kernel: None, multiplier: Some(mult), table: None })
    }

    pub fn laplacian(grid: Grid) -> Self {
        let mult = (0..grid.len()).map(|k| grid.wavevector_norm(k).powi(2)).collect();
        Self { grid, mode: OperatorMode::Laplacian, kernel: None, multiplier: Some(mult), table: None }
    }

    /// Multiplier from the computed symbol; the kernel must not depend on `x`.
    pub fn spectral_symbol(grid: Grid, kernel: &KernelSpec) -> Result<Self> {
        check_dims(&grid, kernel)?;
        if !kernel.is_translation_invariant() {
            return Err(Error::InvalidKernel("symbol multiplier needs an x-independent kernel".into()));
        }
        let mut norms: Vec<f64> = (0..grid.len()).map(|k| grid.wavevector_norm(k)).collect();
        norms.sort_by(f64::total_cmp);
        norms.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let values: Vec<f64> =
            norms.par_iter().map(|&r| kernel.symbol([0.0; 2], [r, 0.0]).value.re).collect();
        let lookup = |r: f64| {
            let i = norms.partition_point(|&x| x < r * (1.0 - 1e-12));
            values[i.min(values.len() - 1)]
        };
        let mult = (0..grid.len()).map(|k| lookup(grid.wavevector_norm(k))).collect();
        Ok(Self {
            grid,
            mode: OperatorMode::SpectralSymbol { a: kernel.order() },
            kernel: Some(kernel.clone()),
            multiplier: Some(mult),
            table: None,
        })
    }

    pub fn kernel_quadrature(grid: Grid, kernel: &KernelSpec, eps1: f64) -> Result<Self> {
        check_dims(&grid, kernel)?;
        if !(eps1 > 0.0) {
            return Err(Error::InvalidParameter(format!("eps1 = {eps1} must be positive")));
        }
        let mut table = build_table(&grid, kernel, eps1);
        let mut op = Self {
            grid,
            mode: OperatorMode::KernelQuadrature { eps1 },
            kernel: Some(kernel.clone()),
            multiplier: None,
            table: None,
        };
        table.k_bound = op.sup_norm_bound(&table);
        op.table = Some(table);
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> &OperatorMode {
        &self.mode
    }

    /// Order of the operator (2 for the Laplacian).
    pub fn order(&self) -> f64 {
        match &self.mode {
            OperatorMode::SpectralFractional { a } | OperatorMode::SpectralSymbol { a } => *a,
            OperatorMode::Laplacian => 2.0,
            OperatorMode::KernelQuadrature { .. } => self.kernel.as_ref().map_or(2.0, |k| k.order()),
        }
    }

    /// Largest multiplier (spectral modes) or the l-infinity bound `K(eps1)` (quadrature).
    pub fn max_multiplier(&self) -> f64 {
        match (&self.multiplier, &self.table) {
            (Some(m), _) => m.iter().copied().fold(0.0, f64::max),
            (None, Some(t)) => t.k_bound,
            _ => 0.0,
        }
    }

    /// `K(eps1)` with `sup |L f| <= K sup |f|` for the discrete quadrature operator.
    pub fn k_bound(&self) -> Option<f64> {
        self.table.as_ref().map(|t| t.k_bound)
    }

    pub fn multiplier(&self) -> Option<&[f64]> {
        self.multiplier.as_deref()
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator input"));
        }
        let out = match (&self.multiplier, &self.table) {
            (Some(m), _) => {
                let mut s = transform_forward(f);
                s.coeffs_mut().iter_mut().zip(m).for_each(|(c, w)| *c *= *w);
                transform_inverse(&s, &self.grid)?
            }
            (None, Some(t)) => self.apply_quadrature(t, f)?,
            _ => unreachable!("handle without multiplier or table"),
        };
        if out.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator output"));
        }
        Ok(out)
    }

    /// `int L f dx`, which vanishes for every supported mode.
    pub fn mass_functional(&self, f: &Field) -> Result<f64> {
        Ok(self.apply(f)?.integral())
    }

    /// `eps2 * Delta f`; only for the Laplacian handle.
    pub fn viscous(&self, f: &Field, eps2: f64) -> Result<Field> {
        if self.mode != OperatorMode::Laplacian {
            return Err(Error::InvalidParameter("viscous term requires the Laplacian handle".into()));
        }
        if eps2 == 0.0 {
            return Ok(Field::zeros(self.grid));
        }
        self.apply(f)?.map(|v| -eps2 * v)
    }

    fn kernel(&self) -> &KernelSpec {
        self.kernel.as_ref().expect("quadrature handle has a kernel")
    }

    /// `(row weights, drift)` at lattice point `i`.
    fn row(&self, t: &QuadratureTable, i: usize) -> (Vec<f64>, [f64; 2]) {
        let k = self.kernel();
        let x = self.grid.position(i);
        let mut drift = [0.0; 2];
        let w: Vec<f64> = t
            .cells
            .iter()
            .map(|&(_, y, local, image)| {
                let fac = k.factor(x, y);
                if t.compensated && y[0].hypot(y[1]) <= 2.0 {
                    drift[0] += fac * local * y[0];
                    drift[1] += fac * local * y[1];
                }
                fac * (local + image)
            })
            .collect();
        (w, drift)
    }

    fn apply_quadrature(&self, t: &QuadratureTable, f: &Field) -> Result<Field> {
        let grid = self.grid;
        let k = self.kernel();
        let lap = spectral_laplacian(f)?;
        let grads: Vec<Field> = (0..grid.dim()).map(|ax| spectral_derivative(f, ax)).collect::<Result<_>>()?;
        let gfield = Field::from_fn(grid, |x| k.modulation(x))?;
        let ggrads: Vec<Field> =
            (0..grid.dim()).map(|ax| spectral_derivative(&gfield, ax)).collect::<Result<_>>()?;
        let d = grid.dim() as f64;
        let (eps, midpoint) = match k.kind() {
            KernelKind::Inhomogeneous { eps, variant, .. } => {
                (*eps, *variant == crate::kernels::InhomogeneousVariant::Midpoint)
            }
            _ => (0.0, false),
        };
        let fv = f.values();
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (w, drift) = self.row(t, i);
                let fi = fv[i];
                let mut acc = 0.0;
                for (c, wj) in t.cells.iter().zip(&w) {
                    acc -= wj * (fv[grid.shifted(i, c.0)] - fi);
                }
                let x = grid.position(i);
                let f0 = k.factor(x, [0.0; 2]);
                acc -= f0 * lap.values()[i] * t.central_m2 / (2.0 * d);
                let mut grad_dot_drift = 0.0;
                let mut grad_dot_g = 0.0;
                for ax in 0..grid.dim() {
                    grad_dot_drift += grads[ax].values()[i] * drift[ax];
                    grad_dot_g += grads[ax].values()[i] * ggrads[ax].values()[i];
                }
                acc += grad_dot_drift;
                if midpoint && !t.compensated {
                    acc -= 0.5 * eps * grad_dot_g * t.central_m2 / d;
                }
                acc
            })
            .collect();
        Field::new(grid, values)
    }

    /// Max over rows of the l1 norm of the discrete operator.
    fn sup_norm_bound(&self, t: &QuadratureTable) -> f64 {
        let grid = self.grid;
        let delta = Field::new(grid, (0..grid.len()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect())
            .expect("finite");
        let row_norm = |g: Field| g.values().iter().map(|v| v.abs()).sum::<f64>();
        let lap_norm = row_norm(spectral_laplacian(&delta).expect("same grid"));
        let grad_norm = row_norm(spectral_derivative(&delta, 0).expect("same grid"));
        let k = self.kernel();
        let d = grid.dim() as f64;
        let gmax = match k.kind() {
            KernelKind::Inhomogeneous { eps, modes, box_length, .. } => {
                eps.abs() * modes.iter().map(|m| m.amplitude.abs() * 2.0 * PI * (m.k[0].abs() + m.k[1].abs()) as f64 / box_length).sum::<f64>()
            }
            _ => 0.0,
        };
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (w, drift) = self.row(t, i);
                let s: f64 = w.iter().map(|v| v.abs()).sum::<f64>() + w.iter().sum::<f64>().abs();
                let f0 = k.factor(grid.position(i), [0.0; 2]).abs();
                s + f0 * t.central_m2 / (2.0 * d) * lap_norm
                    + (drift[0].abs() + drift[1].abs() + 0.5 * gmax * t.central_m2 / d) * grad_norm
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn check_dims(grid: &Grid, kernel: &KernelSpec) -> Result<()> {
    if grid.dim() != kernel.dim() {
        return Err(Error::InvalidKernel(format!(
            "kernel dimension {} on a {}-d grid",
            kernel.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

fn radial_profile_tempered(kernel: &KernelSpec) -> bool {
    matches!(kernel.kind(), KernelKind::Tempered { .. })
}

/// `int_lo^hi r^2 k0(r) r^{d-1} dr`, i.e. `c int r^{1-a} w(r)`.
fn second_moment_radial(kernel: &KernelSpec, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let rule = Rule::new(16);
    let unit = kernel.radial_density(1.0) * if radial_profile_tempered(kernel) { 1.0f64.exp() } else { 1.0 };
    let w = |r: f64| if radial_profile_tempered(kernel) { (-r).exp() } else { 1.0 };
    let p = 1.0 - kernel.order();
    unit * (rule.integrate_power_origin(hi, p, w) - rule.integrate_power_origin(lo, p, w))
}

/// `int_rho^inf k0(r) r^{d-1} dr`.
pub(crate) fn mass_beyond(kernel: &KernelSpec, rho: f64) -> f64 {
    let a = kernel.order();
    if radial_profile_tempered(kernel) {
        let rule = Rule::new(16);
        let d = kernel.dim() as f64;
        let f = |r: f64| kernel.radial_density(r) * r.powf(d - 1.0);
        rule.integrate_panels(rho, rho + 80.0, 80, f)
    } else {
        kernel.radial_density(rho) * rho.powf(kernel.dim() as f64) / a
    }
}

fn build_table(grid: &Grid, kernel: &KernelSpec, eps1: f64) -> QuadratureTable {
    let h = grid.spacing();
    let l = grid.length();
    let n = grid.n() as f64;
    let compensated = kernel.order() >= 1.0 && !kernel.symmetric_in_y();
    let rule = Rule::new(8);
    let m2_density = |y: [f64; 2]| {
        let r = y[0].hypot(y[1]);
        if r <= eps1 {
            0.0
        } else {
            r * r * kernel.radial_density(r)
        }
    };
    let offsets = grid.offsets();
    let cells: Vec<([i64; 2], [f64; 2], f64, f64)> = if grid.dim() == 1 {
        let mut remainder = 2.0 * mass_beyond(kernel, (IMAGES_1D as f64 + 0.5) * l);
        remainder /= n;
        offsets
            .par_iter()
            .filter(|o| o[0] != 0)
            .map(|&o| {
                let yc = o[0] as f64 * h;
                let (lo, hi) = ((yc.abs() - 0.5 * h).max(eps1), yc.abs() + 0.5 * h);
                let local = if hi > lo { second_moment_radial(kernel, lo, hi) / (yc * yc) } else { 0.0 };
                let mut image = remainder;
                for m in 1..=IMAGES_1D {
                    for s in [-1.0, 1.0] {
                        let c = yc + s * m as f64 * l;
                        image += rule.integrate(c - 0.5 * h, c + 0.5 * h, |y| kernel.radial_density(y.abs()));
                    }
                }
                (o, [yc, 0.0], local, image)
            })
            .collect()
    } else {
        let half = (IMAGES_2D as f64 + 0.5) * l;
        // Mass outside the square of half-width `half`, by symmetry over 8 octants.
        let theta_rule = Rule::new(24);
        let remainder = 8.0 * theta_rule.integrate(0.0, 0.25 * PI, |th| mass_beyond(kernel, half / th.cos()))
            / (n * n);
        let fine = Rule::new(6);
        let coarse = Rule::new(2);
        offsets
            .par_iter()
            .filter(|o| o[0] != 0 || o[1] != 0)
            .map(|&o| {
                let yc = [o[0] as f64 * h, o[1] as f64 * h];
                let r2 = yc[0] * yc[0] + yc[1] * yc[1];
                let near = (yc[0].abs() - 0.5 * h).max(0.0).hypot((yc[1].abs() - 0.5 * h).max(0.0));
                let far = (yc[0].abs() + 0.5 * h).hypot(yc[1].abs() + 0.5 * h);
                let split = if near < eps1 && far > eps1 { 8 } else { 1 };
                let sub = h / split as f64;
                let mut m2 = 0.0;
                if far > eps1 {
                    for a in 0..split {
                        for b in 0..split {
                            let x0 = yc[0] - 0.5 * h + a as f64 * sub;
                            let y0 = yc[1] - 0.5 * h + b as f64 * sub;
                            m2 += fine.integrate(x0, x0 + sub, |yx| {
                                fine.integrate(y0, y0 + sub, |yy| m2_density([yx, yy]))
                            });
                        }
                    }
                }
                let mut image = remainder;
                for p in -IMAGES_2D..=IMAGES_2D {
                    for q in -IMAGES_2D..=IMAGES_2D {
                        if p == 0 && q == 0 {
                            continue;
                        }
                        let c = [yc[0] + p as f64 * l, yc[1] + q as f64 * l];
                        image += coarse.integrate(c[0] - 0.5 * h, c[0] + 0.5 * h, |yx| {
                            coarse.integrate(c[1] - 0.5 * h, c[1] + 0.5 * h, |yy| {
                                kernel.radial_density(yx.hypot(yy))
                            })
                        });
                    }
                }
                (o, yc, m2 / r2, image)
            })
            .collect()
    };
    let central_m2 = if grid.dim() == 1 {
        2.0 * second_moment_radial(kernel, eps1, 0.5 * h)
    } else {
        let theta_rule = Rule::new(32);
        8.0 * theta_rule.integrate_panels(0.0, 0.25 * PI, 8, |th| {
            second_moment_radial(kernel, eps1, 0.5 * h / th.cos())
        })
    };
    QuadratureTable { cells, central_m2, compensated, k_bound: 0.0 }
}

/// Per-offset lattice weights (local second-moment weight plus image masses) of `k0 1_{|y| > eps1}`.
pub(crate) fn lattice_weights(grid: &Grid, kernel: &KernelSpec, eps1: f64) -> Vec<([i64; 2], [f64; 2], f64)> {
    build_table(grid, kernel, eps1).cells.into_iter().map(|(o, y, local, image)| (o, y, local + image)).collect()
}
