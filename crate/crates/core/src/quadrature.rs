//! Gauss-Legendre panel rules used by the singular integrals.

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre rule with `order` points (order >= 2).
    pub fn new(order: usize) -> Self {
        let gl = GaussLegendre::new(order.max(2)).expect("order >= 2");
        let mut pairs: Vec<(f64, f64)> = gl.into_iter().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    pub fn integrate_complex(&self, a: f64, b: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(mid + half * x) * w)
            .sum::<Complex64>()
            * half
    }

    /// Integral over `[a, b]` split into `panels` equal pieces.
    pub fn integrate_panels(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let panels = panels.max(1);
        let w = (b - a) / panels as f64;
        (0..panels)
            .map(|i| self.integrate(a + i as f64 * w, a + (i + 1) as f64 * w, &f))
            .sum()
    }

    /// Integral over `[a, b]` with panels graded geometrically (ratio 2) toward `a`,
    /// down to width `(b - a) * 2^-levels`. Suited to integrable endpoint singularities.
    pub fn integrate_graded(&self, a: f64, b: f64, levels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        let mut hi = b;
        for _ in 0..levels {
            let lo = a + 0.5 * (hi - a);
            total += self.integrate(lo, hi, &f);
            hi = lo;
        }
        total + self.integrate(a, hi, &f)
    }

    /// `int_0^b r^p h(r) dr` for `p > -1` and smooth `h`, via `r = b s^{1/(p+1)}`.
    pub fn integrate_power_origin(&self, b: f64, p: f64, h: impl Fn(f64) -> f64) -> f64 {
        let q = 1.0 / (p + 1.0);
        b.powf(p + 1.0) * q * self.integrate(0.0, 1.0, |s| h(b * s.powf(q)))
    }
}

/// Geometric breakpoints `lo, 2 lo, 4 lo, ..., hi` (last piece may be shorter).
pub fn geometric_breaks(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = vec![lo];
    let mut x = lo;
    while x * 2.0 < hi {
        x *= 2.0;
        out.push(x);
    }
    out.push(hi);
    out
}
