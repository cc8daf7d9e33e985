use fracpme_core::kernels::{InhomogeneousVariant, KernelSpec, QuadratureParams};
use fracpme_core::nonlinearity::NonlinearitySpec;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

fn closed_form_constant(d: usize, a: f64) -> f64 {
    let d = d as f64;
    a * 2f64.powf(a - 1.0) * gamma(0.5 * (d + a)) / (PI.powf(0.5 * d) * gamma(1.0 - 0.5 * a))
}

#[test]
fn calibration_matches_gamma_formula() {
    for d in 1..=2 {
        for &a in &[0.25, 0.5, 1.0, 1.5, 1.8] {
            let k = KernelSpec::fractional(d, a).unwrap();
            let exact = closed_form_constant(d, a);
            assert!((k.c_da() / exact - 1.0).abs() < 1e-6, "d={d} a={a}: {} vs {exact}", k.c_da());
        }
    }
}

#[test]
fn cauchy_kernel_symbol_at_two() {
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let p = k.symbol([0.0; 2], [2.0, 0.0]);
    assert!((p.value.re - 2.0).abs() < 1e-3 * 2.0);
    assert!(!p.warning);
}

#[test]
fn homogeneity() {
    for d in 1..=2 {
        for &a in &[0.5, 1.0, 1.5] {
            let k = KernelSpec::fractional(d, a).unwrap();
            let base = k.symbol([0.0; 2], [0.6, 0.8]).value.re;
            for &lambda in &[2.0f64, 4.0] {
                let scaled = k.symbol([0.0; 2], [0.6 * lambda, 0.8 * lambda]).value.re;
                let rel = (scaled / (lambda.powf(a) * base) - 1.0).abs();
                assert!(rel < 1e-3, "d={d} a={a} lambda={lambda}: {rel}");
            }
        }
    }
}

#[test]
fn isotropic_in_two_dimensions() {
    let k = KernelSpec::fractional(2, 1.3).unwrap();
    let p = k.symbol([0.0; 2], [1.2, 1.6]).value.re;
    assert!((p - 2f64.powf(1.3)).abs() < 1e-6);
}

#[test]
fn symmetric_kernels_have_real_symbols() {
    let kernels = [
        KernelSpec::fractional(1, 0.7).unwrap(),
        KernelSpec::tempered(2, 1.2, 2.0).unwrap(),
        KernelSpec::inhomogeneous_cos(1, 1.0, 0.3, 4.0, InhomogeneousVariant::Pointwise).unwrap(),
    ];
    for k in &kernels {
        assert!(k.symmetric_in_y());
        for &xi in &[0.3, 1.0, 5.0] {
            let v = k.symbol([0.4, 0.1], [xi, -0.5 * xi]).value;
            assert!(v.im.abs() <= 1e-8 * (1.0 + v.re.abs()));
        }
    }
}

#[test]
fn refinement_stays_within_error_estimate() {
    let k = KernelSpec::fractional(1, 0.6).unwrap();
    for &xi in &[0.7, 3.0, 11.0] {
        let coarse = QuadratureParams::default();
        let r0 = 1.0e-3 * (2.0 * PI / xi).max(1.0);
        let fine = QuadratureParams { r0: Some(0.5 * r0), panel_factor: 2, ..coarse };
        let a = k.symbol_with([0.0; 2], [xi, 0.0], &coarse);
        let b = k.symbol_with([0.0; 2], [xi, 0.0], &fine);
        assert!((a.value - b.value).norm() <= a.error_estimate, "xi={xi}: {a:?} {b:?}");
    }
}

#[test]
fn tight_tolerance_raises_warning() {
    let k = KernelSpec::fractional(1, 0.6).unwrap();
    let params = QuadratureParams { tol: 1e-18, ..Default::default() };
    assert!(k.symbol_with([0.0; 2], [2.0, 0.0], &params).warning);
}

fn sweep(d: usize) -> Vec<([f64; 2], [f64; 2])> {
    let mut out = Vec::new();
    for i in 0..6 {
        let x = [0.7 * i as f64, 0.3 * i as f64];
        for j in 0..5 {
            let r = 2f64.powi(j);
            let th = 0.4 * (i + j) as f64;
            let xi = if d == 1 { [r * (if j % 2 == 0 { 1.0 } else { -1.0 }), 0.0] } else { [r * th.cos(), r * th.sin()] };
            out.push((x, xi));
        }
    }
    out
}

#[test]
fn fractional_bound_report() {
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let rep = k.verify_symbol_bounds(&sweep(1), &QuadratureParams::default());
    assert!((rep.c_est - 1.0).abs() < 0.05);
    assert!(rep.m_est <= 1e-6);
    assert_eq!(rep.growth_violations, 0);
    assert_eq!(rep.violations, 0);
    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    for key in ["c_est", "M_est", "samples", "quadrature_params", "violations"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn inhomogeneous_bound_report() {
    let k = KernelSpec::inhomogeneous_cos(1, 1.0, 0.3, 4.2, InhomogeneousVariant::Pointwise).unwrap();
    let rep = k.verify_symbol_bounds(&sweep(1), &QuadratureParams::default());
    assert!(rep.c_est >= 0.7 * (1.0 - 1e-3));
    assert_eq!(rep.growth_violations, 0);
    let k2 = KernelSpec::inhomogeneous_cos(2, 1.4, 0.4, 4.2, InhomogeneousVariant::Midpoint).unwrap();
    let rep2 = k2.verify_symbol_bounds(&sweep(2), &QuadratureParams::default());
    assert!(rep2.c_est > 0.0);
    assert_eq!(rep2.violations, 0);
    assert_eq!(rep2.growth_violations, 0);
}

#[test]
fn density_bounds_and_symmetries() {
    let mid = KernelSpec::inhomogeneous_cos(2, 1.5, 0.4, 3.0, InhomogeneousVariant::Midpoint).unwrap();
    let pw = KernelSpec::inhomogeneous_cos(2, 1.0, 0.4, 3.0, InhomogeneousVariant::Pointwise).unwrap();
    let d = 2.0;
    for i in 0..20 {
        let x = [0.37 * i as f64, -0.21 * i as f64];
        let y = [0.05 + 0.13 * i as f64, 0.4 - 0.07 * i as f64];
        let r = y[0].hypot(y[1]);
        for (k, a) in [(&mid, 1.5), (&pw, 1.0)] {
            let v = k.density(x, y);
            let scale = r.powf(-d - a);
            assert!(v >= k.lower_const() * scale * (1.0 - 1e-12));
            assert!(v <= k.upper_const() * scale * (1.0 + 1e-12));
        }
        let xy = [x[0] + y[0], x[1] + y[1]];
        let back = mid.density(xy, [-y[0], -y[1]]);
        assert!((mid.density(x, y) - back).abs() <= 1e-12 * back);
        assert!((pw.density(x, y) - pw.density(x, [-y[0], -y[1]])).abs() <= 1e-12 * pw.density(x, y));
    }
}

/// Direct evaluation of the defining integral on the line, after the
/// substitution y = t^2: composite midpoint near the origin, Simpson beyond.
fn brute_force_symbol(k: &KernelSpec, x: f64, xi: f64) -> (f64, f64) {
    let a = k.order();
    let y_max: f64 = 4000.0;
    let integrand = |y: f64| {
        let comp = if a >= 1.0 && y <= 2.0 { 1.0 } else { 0.0 };
        let mut re = 0.0;
        let mut im = 0.0;
        for s in [1.0, -1.0] {
            let ys = s * y;
            let kv = k.density([x, 0.0], [ys, 0.0]);
            re += -2.0 * (0.5 * xi * ys).sin().powi(2) * kv;
            im += ((xi * ys).sin() - comp * xi * ys) * kv;
        }
        (-re, -im)
    };
    let simpson = |t0: f64, t1: f64, n: usize| {
        let h = (t1 - t0) / n as f64;
        let (mut sr, mut si) = (0.0, 0.0);
        for i in 0..=n {
            let t = t0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let (r, im) = integrand(t * t);
            sr += w * r * 2.0 * t;
            si += w * im * 2.0 * t;
        }
        (sr * h / 3.0, si * h / 3.0)
    };
    let midpoint = |t0: f64, t1: f64, n: usize| {
        let h = (t1 - t0) / n as f64;
        let (mut sr, mut si) = (0.0, 0.0);
        for i in 0..n {
            let t = t0 + (i as f64 + 0.5) * h;
            let (r, im) = integrand(t * t);
            sr += r * 2.0 * t;
            si += im * 2.0 * t;
        }
        (sr * h, si * h)
    };
    let (r1, i1) = midpoint(0.0, 2f64.sqrt(), 200_000);
    let (r2, i2) = simpson(2f64.sqrt(), y_max.sqrt(), 2_000_000);
    let tail = 2.0 * k.c_da() * y_max.powf(-a) / a * (1.0 + 0.5 * 0.3 * k.modulation([x, 0.0]));
    (r1 + r2 + tail, i1 + i2)
}

#[test]
fn midpoint_symbol_matches_direct_integral() {
    let k = KernelSpec::inhomogeneous_cos(1, 1.5, 0.3, 2.0 * PI, InhomogeneousVariant::Midpoint).unwrap();
    for &(x, xi) in &[(0.0, 0.5), (1.0, 2.0), (2.5, -1.5)] {
        let p = k.symbol([x, 0.0], [xi, 0.0]).value;
        let (re, im) = brute_force_symbol(&k, x, xi);
        let scale = p.norm();
        assert!((p.re - re).abs() < 1e-5 * scale, "x={x} xi={xi}: {p} vs {re}");
        assert!((p.im - im).abs() < 1e-5 * scale, "x={x} xi={xi}: {p} vs {im}");
    }
    assert!(k.symbol([1.0, 0.0], [2.0, 0.0]).value.im.abs() > 1e-4);
}

#[test]
fn kinetic_symbol_examples() {
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let deg = k.kinetic_symbol(&phi, [0.0; 2], 1.0, [4.0, 0.0], 0.0).value;
    assert_eq!((deg.re, deg.im), (0.0, 1.0));
    let s = k.kinetic_symbol(&phi, [0.0; 2], 0.0, [3.0, 0.0], 0.5).value;
    assert!((s.re - 3.0).abs() < 3e-3 && s.im == 0.0);
    let mut c_min = f64::INFINITY;
    for &tau in &[-5.0, -0.3, 0.0, 0.7, 4.0] {
        for &xi in &[1.0, 2.5, 9.0] {
            for &v in &[-2.0, -0.1, 0.05, 1.3] {
                let l = k.kinetic_symbol(&phi, [0.0; 2], tau, [xi, 0.0], v).value.norm();
                let rhs = tau.abs() + phi.dphi(v) * xi;
                c_min = c_min.min(l / rhs);
            }
        }
    }
    assert!(c_min >= 0.5, "{c_min}");
}
