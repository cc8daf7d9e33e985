//! Jump kernels `k(x, y)` of order `a` and their symbols
//! `p(x, xi) = -int (e^{i y.xi} - 1 - 1_{a >= 1} 1_{|y| <= 2} i xi.y) k(x, y) dy`.
//!
//! Radial integrals are split at `r0` (second-order Taylor replacement of the
//! oscillatory factor), integrated over geometric panels up to `R`, and closed
//! with an analytic tail. Inhomogeneous kernels are cosine modulations of the
//! fractional kernel; their symbols reduce to radial symbols at shifted
//! frequencies plus a compensator integral.

use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{geometric_breaks, Rule};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radius on which the two-sided bound constants of non-homogeneous profiles are measured.
pub const BOUND_RADIUS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InhomogeneousVariant {
    /// Factor `1 + eps (g(x) + g(x+y)) / 2`: satisfies `k(x,y) = k(x+y,-y)`, not even in `y`.
    Midpoint,
    /// Factor `1 + eps g(x)`: even in `y`, does not satisfy `k(x,y) = k(x+y,-y)`.
    Pointwise,
}

/// One term `amplitude * cos(2 pi k.x / box_length + phase)` of the modulation `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosMode {
    pub k: [i64; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `c_{d,a} |y|^{-d-a}`.
    Fractional,
    /// `coefficient * c_{d,a} |y|^{-d-a} e^{-|y|}`.
    Tempered { coefficient: f64 },
    /// Modulated fractional kernel, `g = sum of modes`.
    Inhomogeneous {
        eps: f64,
        modes: Vec<CosMode>,
        box_length: f64,
        variant: InhomogeneousVariant,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    /// Inner split radius; `None` selects `1e-3 * max(2 pi / |xi|, 1)`.
    pub r0: Option<f64>,
    pub r_outer: f64,
    pub order: usize,
    /// Extra subdivision of every oscillation panel.
    pub panel_factor: usize,
    /// Relative tolerance above which a sample is flagged.
    pub tol: f64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self { r0: None, r_outer: 1.0e3, order: 16, panel_factor: 1, tol: 1.0e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub x: [f64; 2],
    pub xi: [f64; 2],
    pub value: Complex64,
    pub a: f64,
    pub error_estimate: f64,
    /// Set when the error estimate exceeds the requested tolerance.
    pub warning: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub c_est: f64,
    #[serde(rename = "M_est")]
    pub m_est: f64,
    pub fitted_c_prime: f64,
    pub growth_violations: usize,
    /// Samples with `|xi| >= 1` and `Re p <= 0`.
    pub violations: usize,
    pub warnings: usize,
    pub samples: Vec<SymbolSample>,
    pub quadrature_params: QuadratureParams,
}

impl BoundReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KineticSymbol {
    pub value: Complex64,
    pub warning: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelSpec {
    d: usize,
    a: f64,
    kind: KernelKind,
    /// Calibrated constant with `p(|xi| = 1) = 1` for the fractional kernel.
    c_da: f64,
    lower_const: f64,
    upper_const: f64,
    symmetric_in_y: bool,
}

impl KernelSpec {
    pub fn new(d: usize, a: f64, kind: KernelKind) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidKernel(format!("dimension {d} not supported")));
        }
        if !(a > 0.0 && a < 2.0) {
            return Err(Error::InvalidKernel(format!("order a = {a} outside (0, 2)")));
        }
        let (lower, upper, symmetric) = match &kind {
            KernelKind::Fractional => (1.0, 1.0, true),
            KernelKind::Tempered { coefficient } => {
                if !(*coefficient > 0.0) {
                    return Err(Error::InvalidKernel("tempered coefficient must be positive".into()));
                }
                (coefficient * (-BOUND_RADIUS).exp(), *coefficient, true)
            }
            KernelKind::Inhomogeneous { eps, modes, box_length, variant } => {
                if !(*box_length > 0.0) {
                    return Err(Error::InvalidKernel("modulation box length must be positive".into()));
                }
                if d == 1 && modes.iter().any(|m| m.k[1] != 0) {
                    return Err(Error::InvalidKernel("1-d modulation with a second wavenumber".into()));
                }
                let s = eps.abs() * modes.iter().map(|m| m.amplitude.abs()).sum::<f64>();
                if s > 0.5 {
                    return Err(Error::InvalidKernel(format!("|eps g| may reach {s} > 1/2")));
                }
                (1.0 - s, 1.0 + s, *variant == InhomogeneousVariant::Pointwise)
            }
        };
        if a == 1.0 && !symmetric {
            return Err(Error::InvalidKernel("a = 1 requires a kernel even in y".into()));
        }
        let probe = radial_symbol(d, a, false, 1.0, 1.0, &QuadratureParams::default());
        let c_da = 1.0 / probe.0;
        Ok(Self {
            d,
            a,
            kind,
            c_da,
            lower_const: lower * c_da,
            upper_const: upper * c_da,
            symmetric_in_y: symmetric,
        })
    }

    pub fn fractional(d: usize, a: f64) -> Result<Self> {
        Self::new(d, a, KernelKind::Fractional)
    }

    pub fn tempered(d: usize, a: f64, coefficient: f64) -> Result<Self> {
        Self::new(d, a, KernelKind::Tempered { coefficient })
    }

    /// Single-mode modulation `g(x) = cos(2 pi x_1 / box_length)`.
    pub fn inhomogeneous_cos(
        d: usize,
        a: f64,
        eps: f64,
        box_length: f64,
        variant: InhomogeneousVariant,
    ) -> Result<Self> {
        let modes = vec![CosMode { k: [1, 0], amplitude: 1.0, phase: 0.0 }];
        Self::new(d, a, KernelKind::Inhomogeneous { eps, modes, box_length, variant })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> f64 {
        self.a
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn c_da(&self) -> f64 {
        self.c_da
    }

    pub fn lower_const(&self) -> f64 {
        self.lower_const
    }

    pub fn upper_const(&self) -> f64 {
        self.upper_const
    }

    pub fn symmetric_in_y(&self) -> bool {
        self.symmetric_in_y
    }

    /// True when `k` does not depend on `x`.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.kind, KernelKind::Inhomogeneous { .. })
    }

    fn tempered_coefficient(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Tempered { coefficient } => Some(coefficient),
            _ => None,
        }
    }

    /// x-independent radial part `k0(|y|)`.
    pub fn radial_density(&self, r: f64) -> f64 {
        let base = self.c_da * r.powf(-(self.d as f64) - self.a);
        match self.tempered_coefficient() {
            Some(c) => c * base * (-r).exp(),
            None => base,
        }
    }

    /// Modulation `g(x)`; zero for translation-invariant kernels.
    pub fn modulation(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            KernelKind::Inhomogeneous { modes, box_length, .. } => modes
                .iter()
                .map(|m| {
                    let arg = 2.0 * PI * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]) / box_length;
                    m.amplitude * (arg + m.phase).cos()
                })
                .sum(),
            _ => 0.0,
        }
    }

    /// Multiplicative factor `k(x, y) / k0(|y|)`.
    pub fn factor(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match &self.kind {
            KernelKind::Inhomogeneous { eps, variant, .. } => match variant {
                InhomogeneousVariant::Pointwise => 1.0 + eps * self.modulation(x),
                InhomogeneousVariant::Midpoint => {
                    let xy = [x[0] + y[0], x[1] + y[1]];
                    1.0 + 0.5 * eps * (self.modulation(x) + self.modulation(xy))
                }
            },
            _ => 1.0,
        }
    }

    pub fn density(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let r = if self.d == 1 { y[0].abs() } else { y[0].hypot(y[1]) };
        self.radial_density(r) * self.factor(x, y)
    }

    fn norm(&self, xi: [f64; 2]) -> f64 {
        if self.d == 1 {
            xi[0].abs()
        } else {
            xi[0].hypot(xi[1])
        }
    }

    /// Symbol with default quadrature parameters.
    pub fn symbol(&self, x: [f64; 2], xi: [f64; 2]) -> SymbolSample {
        self.symbol_with(x, xi, &QuadratureParams::default())
    }

    pub fn symbol_with(&self, x: [f64; 2], xi: [f64; 2], params: &QuadratureParams) -> SymbolSample {
        let eta = self.norm(xi);
        let tempered = self.tempered_coefficient();
        let c = self.c_da * tempered.unwrap_or(1.0);
        let (base, base_err) = radial_symbol(self.d, self.a, tempered.is_some(), c, eta, params);
        let (value, err) = match &self.kind {
            KernelKind::Inhomogeneous { eps, modes, box_length, variant } => {
                let g = self.modulation(x);
                match variant {
                    InhomogeneousVariant::Pointwise => {
                        let f = 1.0 + eps * g;
                        (Complex64::new(f * base, 0.0), f.abs() * base_err)
                    }
                    InhomogeneousVariant::Midpoint => {
                        let mut val = Complex64::new((1.0 + 0.5 * eps * g) * base, 0.0);
                        let mut err = base_err;
                        for m in modes {
                            let kappa = [
                                2.0 * PI * m.k[0] as f64 / box_length,
                                2.0 * PI * m.k[1] as f64 / box_length,
                            ];
                            let phase = kappa[0] * x[0] + kappa[1] * x[1] + m.phase;
                            let e = Complex64::from_polar(1.0, phase);
                            for (sign, weight) in [(1.0, e), (-1.0, e.conj())] {
                                let k = [sign * kappa[0], sign * kappa[1]];
                                let (t, t_err) = self.shifted_term(c, xi, k, params);
                                val += weight * (0.25 * eps * m.amplitude * t);
                                err += 0.25 * (eps * m.amplitude).abs() * t_err;
                            }
                        }
                        (val, err)
                    }
                }
            }
            _ => (Complex64::new(base, 0.0), base_err),
        };
        let warning = !(err <= params.tol * value.norm().max(1.0));
        SymbolSample { x, xi, value, a: self.a, error_estimate: err, warning }
    }

    /// `-int (e^{i xi.y} - 1 - chi i xi.y) e^{i kappa.y} k0(y) dy`.
    fn shifted_term(&self, c: f64, xi: [f64; 2], kappa: [f64; 2], params: &QuadratureParams) -> (f64, f64) {
        let shifted = self.norm([xi[0] + kappa[0], xi[1] + kappa[1]]);
        let (p1, e1) = radial_symbol(self.d, self.a, false, c, shifted, params);
        let (p2, e2) = radial_symbol(self.d, self.a, false, c, self.norm(kappa), params);
        let comp = if self.a >= 1.0 { compensator(self.d, self.a, c, xi, kappa, params) } else { 0.0 };
        (p1 - p2 + comp, e1 + e2)
    }

    /// Symbol bound statistics over `(x, xi)` samples.
    pub fn verify_symbol_bounds(
        &self,
        samples: &[([f64; 2], [f64; 2])],
        params: &QuadratureParams,
    ) -> BoundReport {
        let values: Vec<SymbolSample> =
            samples.par_iter().map(|&(x, xi)| self.symbol_with(x, xi, params)).collect();
        let mut c_est = f64::INFINITY;
        let mut m_est: f64 = 0.0;
        let mut c_prime: f64 = 0.0;
        let mut violations = 0;
        for s in &values {
            let eta = self.norm(s.xi);
            if eta == 0.0 {
                continue;
            }
            let scale = eta.powf(self.a);
            c_est = c_est.min(s.value.re / scale);
            m_est = m_est.max((s.value.im / s.value.re).abs());
            if eta >= 1.0 {
                c_prime = c_prime.max(s.value.norm() / scale);
                if s.value.re <= 0.0 {
                    violations += 1;
                }
            }
        }
        let growth_violations = values
            .iter()
            .filter(|s| {
                let eta = self.norm(s.xi);
                eta >= 1.0 && s.value.norm() > c_prime * eta.powf(self.a)
            })
            .count();
        BoundReport {
            c_est,
            m_est,
            fitted_c_prime: c_prime,
            growth_violations,
            violations,
            warnings: values.iter().filter(|s| s.warning).count(),
            samples: values,
            quadrature_params: *params,
        }
    }

    /// `i tau + Phi'(v) p(x, xi)`.
    pub fn kinetic_symbol(
        &self,
        phi: &NonlinearitySpec,
        x: [f64; 2],
        tau: f64,
        xi: [f64; 2],
        v: f64,
    ) -> KineticSymbol {
        let d = phi.dphi(v);
        if d == 0.0 {
            return KineticSymbol { value: Complex64::new(0.0, tau), warning: false };
        }
        let s = self.symbol(x, xi);
        KineticSymbol { value: Complex64::new(0.0, tau) + s.value * d, warning: s.warning }
    }
}

fn sphere_area(d: usize) -> f64 {
    if d == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

/// Spherical mean of `e^{i z omega}`: `cos z` or `J0(z)`.
fn spherical_mean(d: usize, z: f64) -> f64 {
    if d == 1 {
        z.cos()
    } else {
        libm::j0(z)
    }
}

/// `S_d c int_0^inf (1 - spherical_mean(r eta)) w(r) r^{-1-a} dr` with its error estimate.
fn radial_symbol(d: usize, a: f64, tempered: bool, c: f64, eta: f64, params: &QuadratureParams) -> (f64, f64) {
    if eta == 0.0 {
        return (0.0, 0.0);
    }
    let weight = |r: f64| if tempered { (-r).exp() } else { 1.0 };
    let r0 = params.r0.unwrap_or(1.0e-3 * (2.0 * PI / eta).max(1.0));
    let r_out = params.r_outer.max(2.0 * r0);
    let lo_rule = Rule::new(params.order);
    let hi_rule = Rule::new(params.order + 8);

    let inner = hi_rule.integrate_power_origin(r0, 1.0 - a, |r| {
        let df = d as f64;
        eta * eta * (1.0 / (2.0 * df) - (r * eta).powi(2) / (8.0 * df * (df + 2.0))) * weight(r)
    });
    let df = d as f64;
    let taylor_err = eta.powi(6) * r0.powf(6.0 - a) / (48.0 * df * (df + 2.0) * (df + 4.0) * (6.0 - a));

    let integrand = |r: f64| (1.0 - spherical_mean(d, r * eta)) * weight(r) * r.powf(-1.0 - a);
    let (mut mid_lo, mut mid_hi, mut mass) = (0.0, 0.0, 0.0);
    for w in geometric_breaks(r0, r_out).windows(2) {
        let panels = ((w[1] - w[0]) * eta / (0.5 * PI)).ceil().max(1.0) as usize * params.panel_factor.max(1);
        let l = lo_rule.integrate_panels(w[0], w[1], panels, integrand);
        let h = hi_rule.integrate_panels(w[0], w[1], panels, integrand);
        mid_lo += l;
        mid_hi += h;
        mass += h.abs();
    }

    let (tail, tail_err) = if tempered {
        (0.0, (-r_out).exp() * r_out.powf(-1.0 - a))
    } else {
        let osc = if d == 1 {
            -(r_out * eta).sin() * r_out.powf(-1.0 - a) / eta
        } else {
            -r_out.powf(-1.0 - a) * libm::j1(r_out * eta) / eta
        };
        (r_out.powf(-a) / a - osc, (2.0 + a) * r_out.powf(-2.0 - a) / (eta * eta))
    };

    let s = sphere_area(d) * c;
    let value = s * (inner + mid_hi + tail);
    let err = s * ((mid_hi - mid_lo).abs() + taylor_err + tail_err + 1e-13 * (mass + inner.abs()));
    (value, err)
}

/// `i xi . int_{|y| <= 2} y e^{i kappa.y} c |y|^{-d-a} dy`, a real number.
fn compensator(d: usize, a: f64, c: f64, xi: [f64; 2], kappa: [f64; 2], params: &QuadratureParams) -> f64 {
    let kn = if d == 1 { kappa[0].abs() } else { kappa[0].hypot(kappa[1]) };
    if kn == 0.0 {
        return 0.0;
    }
    let proj = if d == 1 { xi[0] * kappa[0] / kn } else { (xi[0] * kappa[0] + xi[1] * kappa[1]) / kn };
    let vector_mean = |z: f64| if d == 1 { z.sin() } else { libm::j1(z) };
    let rule = Rule::new(params.order + 8);
    let pieces = (2.0 * kn / (0.5 * PI)).ceil().max(1.0) as usize;
    let width = 2.0 / pieces as f64;
    let f = |r: f64| vector_mean(r * kn) * r.powf(-a);
    // vector_mean(z) / z is smooth and tends to 1/d at the origin.
    let smooth = |r: f64| {
        let z = r * kn;
        if z < 1e-8 { kn / d as f64 } else { vector_mean(z) / r }
    };
    let mut integral = rule.integrate_power_origin(width, 1.0 - a, smooth);
    integral += rule.integrate_panels(width, 2.0, pieces.saturating_sub(1).max(1), f);
    -sphere_area(d) * c * proj * integral
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_orders_and_asymmetric_a1() {
        assert!(KernelSpec::fractional(1, 0.0).is_err());
        assert!(KernelSpec::fractional(1, 2.0).is_err());
        assert!(KernelSpec::fractional(3, 1.0).is_err());
        assert!(KernelSpec::inhomogeneous_cos(1, 1.0, 0.3, 6.0, InhomogeneousVariant::Midpoint).is_err());
        assert!(KernelSpec::inhomogeneous_cos(1, 1.0, 0.3, 6.0, InhomogeneousVariant::Pointwise).is_ok());
        assert!(KernelSpec::inhomogeneous_cos(1, 1.5, 0.6, 6.0, InhomogeneousVariant::Midpoint).is_err());
    }

    #[test]
    fn zero_frequency_gives_zero() {
        let k = KernelSpec::fractional(1, 0.5).unwrap();
        assert_eq!(k.symbol([0.0; 2], [0.0; 2]).value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn calibrated_unit_frequency() {
        for d in 1..=2 {
            for &a in &[0.3, 1.0, 1.7] {
                let k = KernelSpec::fractional(d, a).unwrap();
                let p = k.symbol([0.0; 2], [1.0, 0.0]).value;
                assert!((p.re - 1.0).abs() < 1e-12, "d={d} a={a} p={p}");
            }
        }
    }

    #[test]
    fn tempered_symbol_below_fractional() {
        let t = KernelSpec::tempered(1, 1.0, 1.0).unwrap();
        let f = KernelSpec::fractional(1, 1.0).unwrap();
        for &xi in &[0.5, 2.0, 8.0] {
            let pt = t.symbol([0.0; 2], [xi, 0.0]).value.re;
            let pf = f.symbol([0.0; 2], [xi, 0.0]).value.re;
            assert!(pt > 0.0 && pt < pf);
        }
    }

    #[test]
    fn pointwise_symbol_scales_by_factor() {
        let k = KernelSpec::inhomogeneous_cos(1, 1.0, 0.3, 4.0, InhomogeneousVariant::Pointwise).unwrap();
        let s = k.symbol([1.0, 0.0], [3.0, 0.0]);
        let expected = (1.0 + 0.3 * (0.5 * PI).cos()) * 3.0;
        assert!((s.value.re - expected).abs() < 1e-6 * expected);
        assert_eq!(s.value.im, 0.0);
    }
}
