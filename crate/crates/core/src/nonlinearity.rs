//! Nonlinearities `Phi` with `Phi' >= 0` and the level-set / co-area checks on `Phi'`.
//!
//! Every kind carries an exponent `m > 1` describing how fast `Phi'` degenerates,
//! `|{Phi' <= delta}| <= C delta^{1/(m-1)}`, together with a per-kind level constant
//! `C` that is computed (closed form for the power law, a delta sweep otherwise).

use crate::error::{Error, Result};
use crate::quadrature::Rule;
use serde::{Deserialize, Serialize};

/// Half-width of the velocity window used by the level-set and co-area routines.
pub const V_MAX: f64 = 1.0e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    /// `Phi(v) = |v|^{m-1} v`.
    Power { m: f64 },
    /// `Phi(v) = sum_i coeffs[i] v^i`, degree `m`.
    Polynomial { coeffs: Vec<f64> },
    /// `Phi'(v) = c prod_i |v - nodes[i]|^{exponents[i] - 1}`, `Phi(0) = 0`.
    Product { c: f64, nodes: Vec<f64>, exponents: Vec<f64> },
    /// `Phi + eps3 * id`.
    EpsilonShifted { base: Box<NonlinearityKind>, eps3: f64 },
    /// `Phi = 0`; only meaningful as the base of a shifted nonlinearity.
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    m: f64,
    c_level: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelSetReport {
    pub delta: f64,
    pub measure: f64,
    pub crossings: usize,
    pub bound: f64,
    pub within_bound: bool,
    /// The sublevel set reaches the window edge.
    pub unbounded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoareaReport {
    pub delta: f64,
    pub i_low: f64,
    pub i_high: f64,
    /// Analytic contribution of `|v| > V_MAX` to `i_high`.
    pub tail: f64,
    pub bound_low: f64,
    pub bound_high: f64,
    pub within_bound: bool,
    pub tail_nonintegrable: bool,
}

impl NonlinearityKind {
    fn exponent(&self) -> Option<f64> {
        match self {
            Self::Power { m } => Some(*m),
            Self::Polynomial { coeffs } => {
                let deg = coeffs.iter().rposition(|c| *c != 0.0)?;
                Some(deg as f64)
            }
            Self::Product { exponents, .. } => {
                Some(1.0 + exponents.iter().map(|e| e - 1.0).sum::<f64>())
            }
            Self::EpsilonShifted { base, .. } => base.exponent(),
            Self::Zero => None,
        }
    }

    fn eval(&self, v: f64) -> (f64, f64, f64) {
        match self {
            Self::Power { m } => {
                let a = v.abs();
                let phi = a.powf(m - 1.0) * v;
                let dphi = m * a.powf(m - 1.0);
                let ddphi = if v == 0.0 { 0.0 } else { m * (m - 1.0) * a.powf(m - 2.0) * v.signum() };
                (phi, dphi, ddphi)
            }
            Self::Polynomial { coeffs } => {
                let (mut p, mut d, mut dd) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    dd = dd * v + d * 2.0;
                    d = d * v + p;
                    p = p * v + c;
                }
                (p, d, dd)
            }
            Self::Product { c, nodes, exponents } => {
                let (d, dd) = self.derivatives(v);
                (product_phi(*c, nodes, exponents, v), d, dd)
            }
            Self::EpsilonShifted { base, eps3 } => {
                let (p, d, dd) = base.eval(v);
                (p + eps3 * v, d + eps3, dd)
            }
            Self::Zero => (0.0, 0.0, 0.0),
        }
    }

    /// `(Phi'(v), Phi''(v))` without evaluating `Phi` (which needs quadrature for products).
    fn derivatives(&self, v: f64) -> (f64, f64) {
        match self {
            Self::Product { c, nodes, exponents } => {
                let dphi = product_dphi(*c, nodes, exponents, v);
                if nodes.contains(&v) {
                    return (dphi, 0.0);
                }
                let ratio: f64 = nodes.iter().zip(exponents).map(|(&n, &e)| (e - 1.0) / (v - n)).sum();
                (dphi, dphi * ratio)
            }
            Self::EpsilonShifted { base, eps3 } => {
                let (d, dd) = base.derivatives(v);
                (d + eps3, dd)
            }
            other => {
                let (_, d, dd) = other.eval(v);
                (d, dd)
            }
        }
    }

    fn primitive(&self, v: f64) -> f64 {
        match self {
            Self::Power { m } => v.abs().powf(m + 1.0) / (m + 1.0),
            Self::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * v.powi(i as i32 + 1) / (i as f64 + 1.0))
                .sum(),
            Self::Product { c, nodes, exponents } => {
                // int_0^v Phi = int_0^v (v - s) Phi'(s) ds
                integrate_split(nodes, 0.0, v, |s| (v - s) * product_dphi(*c, nodes, exponents, s))
            }
            Self::EpsilonShifted { base, eps3 } => base.primitive(v) + 0.5 * eps3 * v * v,
            Self::Zero => 0.0,
        }
    }

    /// Points where `Phi'` may degenerate or is non-smooth.
    fn special_points(&self) -> Vec<f64> {
        match self {
            Self::Power { .. } => vec![0.0],
            Self::Product { nodes, .. } => nodes.clone(),
            Self::EpsilonShifted { base, .. } => base.special_points(),
            Self::Polynomial { .. } | Self::Zero => vec![],
        }
    }
}

fn product_dphi(c: f64, nodes: &[f64], exponents: &[f64], v: f64) -> f64 {
    nodes.iter().zip(exponents).fold(c, |acc, (&n, &e)| acc * (v - n).abs().powf(e - 1.0))
}

fn product_phi(c: f64, nodes: &[f64], exponents: &[f64], v: f64) -> f64 {
    integrate_split(nodes, 0.0, v, |s| product_dphi(c, nodes, exponents, s))
}

/// Signed integral from `a` to `b`, splitting at interior nodes and grading toward them.
fn integrate_split(nodes: &[f64], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut breaks: Vec<f64> = nodes.iter().copied().filter(|&n| n > lo && n < hi).collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    let rule = Rule::new(16);
    let total: f64 = breaks
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            rule.integrate_graded(w[0], mid, 40, &f) - rule.integrate_graded(w[1], mid, 40, &f)
        })
        .sum();
    sign * total
}

impl NonlinearitySpec {
    pub fn power(m: f64) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(Error::InvalidNonlinearity(format!("power exponent m = {m} must exceed 1")));
        }
        // |{m|v|^{m-1} <= delta}| = 2 (delta/m)^{1/(m-1)}; two crossings.
        let c_level = (2.0 * m.powf(-1.0 / (m - 1.0))).max(2.0);
        Ok(Self { kind: NonlinearityKind::Power { m }, m, c_level })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let kind = NonlinearityKind::Polynomial { coeffs };
        let m = kind
            .exponent()
            .filter(|&m| m >= 2.0)
            .ok_or_else(|| Error::InvalidNonlinearity("polynomial degree must be >= 2".into()))?;
        Self::with_swept_constant(kind, m)
    }

    pub fn product(c: f64, nodes: Vec<f64>, exponents: Vec<f64>) -> Result<Self> {
        if !(c > 0.0) || nodes.is_empty() || nodes.len() != exponents.len() {
            return Err(Error::InvalidNonlinearity(
                "product kind needs c > 0 and matching non-empty nodes/exponents".into(),
            ));
        }
        if exponents.iter().any(|&e| !(e > 1.0)) {
            return Err(Error::InvalidNonlinearity("product exponents must exceed 1".into()));
        }
        let kind = NonlinearityKind::Product { c, nodes, exponents };
        let m = kind.exponent().expect("non-empty product");
        Self::with_swept_constant(kind, m)
    }

    /// `Phi + eps3 * id`; keeps the base exponent and level constant, which stay valid
    /// because `{Phi' + eps3 <= delta}` is contained in `{Phi' <= delta}`.
    pub fn shifted(base: &NonlinearitySpec, eps3: f64) -> Result<Self> {
        if !(eps3 >= 0.0 && eps3.is_finite()) {
            return Err(Error::InvalidNonlinearity(format!("eps3 = {eps3} must be >= 0")));
        }
        Ok(Self {
            kind: NonlinearityKind::EpsilonShifted { base: Box::new(base.kind.clone()), eps3 },
            m: base.m,
            c_level: base.c_level,
        })
    }

    /// `Phi = 0`, exponent set to 2 as a placeholder; combine with [`Self::shifted`].
    pub fn zero() -> Self {
        Self { kind: NonlinearityKind::Zero, m: 2.0, c_level: f64::INFINITY }
    }

    /// Rebuilds a spec from its serialized kind.
    pub fn from_kind(kind: NonlinearityKind) -> Result<Self> {
        match kind {
            NonlinearityKind::Power { m } => Self::power(m),
            NonlinearityKind::Polynomial { coeffs } => Self::polynomial(coeffs),
            NonlinearityKind::Product { c, nodes, exponents } => Self::product(c, nodes, exponents),
            NonlinearityKind::EpsilonShifted { base, eps3 } => {
                Self::shifted(&Self::from_kind(*base)?, eps3)
            }
            NonlinearityKind::Zero => Ok(Self::zero()),
        }
    }

    fn with_swept_constant(kind: NonlinearityKind, m: f64) -> Result<Self> {
        let mut spec = Self { kind, m, c_level: f64::INFINITY };
        spec.check_monotone()?;
        let mut c: f64 = 0.0;
        for k in -16..=8 {
            let delta = 10f64.powf(k as f64 / 4.0);
            let r = spec.levelset_measure(delta)?;
            if r.unbounded {
                return Err(Error::InvalidNonlinearity(format!(
                    "sublevel set of Phi' at delta = {delta} reaches the window"
                )));
            }
            c = c.max(r.measure / delta.powf(1.0 / (m - 1.0))).max(r.crossings as f64);
        }
        spec.c_level = c;
        Ok(spec)
    }

    fn check_monotone(&self) -> Result<()> {
        for i in 0..=4000 {
            let v = -50.0 + 0.025 * i as f64;
            let d = self.dphi(v);
            if d < -1e-12 * (1.0 + d.abs()) {
                return Err(Error::InvalidNonlinearity(format!("Phi'({v}) = {d} < 0")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn c_level(&self) -> f64 {
        self.c_level
    }

    /// `(Phi(v), Phi'(v), Phi''(v))`; `Phi''` uses the a.e. formula and is 0 at
    /// the exceptional points of the power and product kinds.
    pub fn eval(&self, v: f64) -> (f64, f64, f64) {
        self.kind.eval(v)
    }

    pub fn phi(&self, v: f64) -> f64 {
        self.kind.eval(v).0
    }

    pub fn dphi(&self, v: f64) -> f64 {
        self.kind.derivatives(v).0
    }

    pub fn ddphi(&self, v: f64) -> f64 {
        self.kind.derivatives(v).1
    }

    /// Antiderivative `Psi` with `Psi' = Phi`, `Psi(0) = 0`.
    pub fn primitive(&self, v: f64) -> f64 {
        self.kind.primitive(v)
    }

    /// Sorted crossings of `Phi' = delta` on `[-V_MAX, V_MAX]`.
    fn crossings(&self, delta: f64) -> Vec<f64> {
        let g = |v: f64| self.dphi(v) - delta;
        let mut samples: Vec<f64> = (0..=8000).map(|i| -V_MAX + i as f64 * V_MAX / 4000.0).collect();
        let mut specials = self.kind.special_points();
        // Critical points of Phi' located from sign changes of Phi'' on a fine window.
        let dd = |v: f64| self.ddphi(v);
        let fine: Vec<f64> = (0..=20000).map(|i| -100.0 + i as f64 * 0.01).collect();
        for w in fine.windows(2) {
            if dd(w[0]).signum() != dd(w[1]).signum() {
                specials.push(bisect(dd, w[0], w[1]));
            }
        }
        for &s in &specials {
            for k in 0..60 {
                let off = 2f64.powi(-k) * 10.0;
                samples.push(s - off);
                samples.push(s + off);
            }
            samples.push(s);
        }
        samples.retain(|v| v.abs() <= V_MAX);
        samples.sort_by(f64::total_cmp);
        samples.dedup();

        let mut out = Vec::new();
        for w in samples.windows(2) {
            let (a, b) = (g(w[0]), g(w[1]));
            if a == 0.0 {
                out.push(w[0]);
            } else if a.signum() != b.signum() && b != 0.0 {
                out.push(bisect(g, w[0], w[1]));
            }
        }
        if let Some(&last) = samples.last() {
            if g(last) == 0.0 {
                out.push(last);
            }
        }
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + a.abs()));
        out
    }

    /// Lebesgue measure of `{v : Phi'(v) <= delta}` within the window.
    pub fn levelset_measure(&self, delta: f64) -> Result<LevelSetReport> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
        }
        let cross = self.crossings(delta);
        let mut breaks = vec![-V_MAX];
        breaks.extend(&cross);
        breaks.push(V_MAX);
        let mut measure = 0.0;
        for w in breaks.windows(2) {
            if w[1] > w[0] && self.dphi(0.5 * (w[0] + w[1])) <= delta {
                measure += w[1] - w[0];
            }
        }
        let unbounded = self.dphi(-V_MAX) <= delta || self.dphi(V_MAX) <= delta;
        let bound = self.c_level * delta.powf(1.0 / (self.m - 1.0));
        let crossings = cross.len();
        if crossings > 1000 {
            return Err(Error::Bracketing(format!(
                "{crossings} crossings of Phi' = {delta}; not finitely many"
            )));
        }
        Ok(LevelSetReport {
            delta,
            measure,
            crossings,
            bound,
            within_bound: !unbounded
                && measure <= bound * (1.0 + 1e-9)
                && crossings as f64 <= self.c_level,
            unbounded,
        })
    }

    /// `I_low = int_{Phi' <= delta} |Phi''|` and `I_high = int_{Phi' > delta} |Phi''| / Phi'^2`.
    pub fn coarea_integrals(&self, delta: f64) -> Result<CoareaReport> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
        }
        let mut breaks = vec![-V_MAX, V_MAX];
        breaks.extend(self.crossings(delta));
        breaks.extend(self.kind.special_points().into_iter().filter(|s| s.abs() < V_MAX));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let rule = Rule::new(16);
        let (mut i_low, mut i_high) = (0.0, 0.0);
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let low = self.dphi(mid) <= delta;
            let integrand = |v: f64| {
                let (d, dd) = self.kind.derivatives(v);
                if low {
                    dd.abs()
                } else if d > 0.0 {
                    dd.abs() / (d * d)
                } else {
                    0.0
                }
            };
            let piece = rule.integrate_graded(a, mid, 48, integrand)
                - rule.integrate_graded(b, mid, 48, integrand);
            if low {
                i_low += piece;
            } else {
                i_high += piece;
            }
        }
        // Beyond the window Phi' grows monotonically: int |Phi''|/Phi'^2 = 1/Phi'(edge).
        let (d_lo, d_hi) = (self.dphi(-V_MAX), self.dphi(V_MAX));
        let tail_nonintegrable = d_lo <= delta || d_hi <= delta;
        let tail = if tail_nonintegrable { f64::INFINITY } else { 1.0 / d_lo + 1.0 / d_hi };
        i_high += tail;
        let bound_low = self.c_level * delta;
        let bound_high = self.c_level / delta;
        Ok(CoareaReport {
            delta,
            i_low,
            i_high,
            tail,
            bound_low,
            bound_high,
            within_bound: i_low <= bound_low * (1.0 + 1e-6) && i_high <= bound_high * (1.0 + 1e-6),
            tail_nonintegrable,
        })
    }
}

fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
