use fracpme_core::kernels::{InhomogeneousVariant, KernelSpec};
use fracpme_core::operator::OperatorHandle;
use fracpme_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(grid: Grid, radius: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / (radius * radius);
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
    .unwrap()
}

/// Smooth random field: a few low modes with random coefficients.
fn smooth_random(grid: Grid, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.length();
    let coeffs: Vec<(f64, f64, f64)> =
        (0..6).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
    Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b, ph))| {
                let w = 2.0 * std::f64::consts::PI * (k + 1) as f64 / l;
                a * (w * x[0] + ph).cos() + b * (w * x[1] * (grid.dim() - 1) as f64 + ph).sin()
            })
            .sum()
    })
    .unwrap()
}

fn rel_l2(a: &Field, b: &Field) -> f64 {
    let diff = a.zip_with(b, |x, y| x - y).unwrap();
    diff.lp_norm(2.0) / b.lp_norm(2.0)
}

#[test]
fn constants_are_annihilated() {
    let g = Grid::new(1, 128, 20.0).unwrap();
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let c = Field::constant(g, 3.0);
    let spec = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    assert!(spec.apply(&c).unwrap().sup_norm() < 1e-10);
    let quad = OperatorHandle::kernel_quadrature(g, &k, 1e-3).unwrap();
    assert!(quad.apply(&c).unwrap().sup_norm() < 1e-10);
}

#[test]
fn quadrature_matches_spectral_on_bump() {
    let g = Grid::new(1, 512, 20.0).unwrap();
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let f = bump(g, 2.5);
    let quad = OperatorHandle::kernel_quadrature(g, &k, 1e-3).unwrap();
    let spec = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    let err = rel_l2(&quad.apply(&f).unwrap(), &spec.apply(&f).unwrap());
    assert!(err <= 1e-2, "{err}");
}

#[test]
fn quadrature_matches_spectral_other_orders_and_2d() {
    let g = Grid::new(1, 256, 20.0).unwrap();
    // The removed core costs about f'' c eps1^{2-a} / (2-a); eps1 is chosen to keep it small.
    for &(a, eps1) in &[(0.5, 1e-3), (1.5, 1e-6)] {
        let k = KernelSpec::fractional(1, a).unwrap();
        let f = bump(g, 3.0);
        let quad = OperatorHandle::kernel_quadrature(g, &k, eps1).unwrap();
        let spec = OperatorHandle::spectral_fractional(g, a).unwrap();
        let err = rel_l2(&quad.apply(&f).unwrap(), &spec.apply(&f).unwrap());
        assert!(err <= 2e-2, "a={a}: {err}");
    }
    let g2 = Grid::new(2, 32, 12.0).unwrap();
    let k2 = KernelSpec::fractional(2, 1.0).unwrap();
    let f2 = bump(g2, 3.0);
    let quad = OperatorHandle::kernel_quadrature(g2, &k2, 1e-3).unwrap();
    let spec = OperatorHandle::spectral_fractional(g2, 1.0).unwrap();
    let err = rel_l2(&quad.apply(&f2).unwrap(), &spec.apply(&f2).unwrap());
    assert!(err <= 5e-2, "2d: {err}");
}

#[test]
fn symbol_multiplier_matches_quadrature_for_tempered() {
    let g = Grid::new(1, 256, 20.0).unwrap();
    let k = KernelSpec::tempered(1, 1.2, 1.5).unwrap();
    let f = bump(g, 3.0);
    let quad = OperatorHandle::kernel_quadrature(g, &k, 1e-3).unwrap();
    let spec = OperatorHandle::spectral_symbol(g, &k).unwrap();
    let err = rel_l2(&quad.apply(&f).unwrap(), &spec.apply(&f).unwrap());
    assert!(err <= 2e-2, "{err}");
}

#[test]
fn mass_functional_vanishes() {
    let g = Grid::new(1, 256, 20.0).unwrap();
    let f = smooth_random(g, 7).zip_with(&bump(g, 3.0), |a, b| a * b).unwrap();
    let spec = OperatorHandle::spectral_fractional(g, 0.8).unwrap();
    assert!(spec.mass_functional(&f).unwrap().abs() <= 1e-10 * f.l1_norm());
    assert_eq!(spec.mass_functional(&Field::zeros(g)).unwrap(), 0.0);
    let k = KernelSpec::inhomogeneous_cos(1, 0.6, 0.3, 20.0, InhomogeneousVariant::Midpoint).unwrap();
    let quad = OperatorHandle::kernel_quadrature(g, &k, 1e-3).unwrap();
    let lf = quad.apply(&f).unwrap();
    assert!(quad.mass_functional(&f).unwrap().abs() <= 1e-10 * lf.l1_norm());
    assert_eq!(quad.mass_functional(&Field::zeros(g)).unwrap(), 0.0);
}

#[test]
fn symmetry_and_positivity() {
    let g = Grid::new(1, 256, 20.0).unwrap();
    let b = bump(g, 4.0);
    let f = smooth_random(g, 1).zip_with(&b, |x, y| x * y).unwrap();
    let h = smooth_random(g, 2).zip_with(&b, |x, y| x * y).unwrap();
    let spec = OperatorHandle::spectral_fractional(g, 1.3).unwrap();
    let lhs = spec.apply(&f).unwrap().inner(&h).unwrap();
    let rhs = f.inner(&spec.apply(&h).unwrap()).unwrap();
    assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
    assert!(spec.apply(&f).unwrap().inner(&f).unwrap() >= 0.0);

    let k = KernelSpec::inhomogeneous_cos(1, 0.6, 0.3, 20.0, InhomogeneousVariant::Midpoint).unwrap();
    let quad = OperatorHandle::kernel_quadrature(g, &k, 1e-3).unwrap();
    let lhs = quad.apply(&f).unwrap().inner(&h).unwrap();
    let rhs = f.inner(&quad.apply(&h).unwrap()).unwrap();
    let scale = quad.apply(&f).unwrap().lp_norm(2.0) * h.lp_norm(2.0);
    assert!((lhs - rhs).abs() <= 1e-3 * scale, "{lhs} vs {rhs}");
    assert!(quad.apply(&f).unwrap().inner(&f).unwrap() >= 0.0);
}

/// For a > 1 the compensator adds `grad f . D(x)` with
/// `D(x) = int_{eps1 < |y| <= 2} y k(x, y) dy`, which is nonzero for the midpoint
/// modulation; the mass defect must equal `int grad f . D dx`.
#[test]
fn compensated_mass_defect_matches_drift_integral() {
    let l = 20.0;
    let (a, eps, eps1) = (1.4, 0.3, 1e-3);
    let g = Grid::new(1, 256, l).unwrap();
    let k = KernelSpec::inhomogeneous_cos(1, a, eps, l, InhomogeneousVariant::Midpoint).unwrap();
    let quad = OperatorHandle::kernel_quadrature(g, &k, eps1).unwrap();
    let f = smooth_random(g, 9).zip_with(&bump(g, 4.0), |x, y| x * y).unwrap();
    let kappa = 2.0 * std::f64::consts::PI / l;
    // int_{eps1}^{2} y^{-a} sin(kappa y) dy by composite Simpson in t = y^{1/4}.
    let n = 20_000;
    let (t0, t1) = (eps1.powf(0.25), 2f64.powf(0.25));
    let h = (t1 - t0) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let t = t0 + i as f64 * h;
        let y = t.powi(4);
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * y.powf(-a) * (kappa * y).sin() * 4.0 * t.powi(3);
    }
    let moment = s * h / 3.0;
    let fp = fracpme_core::grid::spectral_derivative(&f, 0).unwrap();
    let predicted: f64 = (0..g.len())
        .map(|i| {
            let x = g.position(i)[0];
            let drift = -0.5 * eps * (kappa * x).sin() * 2.0 * k.c_da() * moment;
            fp.values()[i] * drift * g.cell_weight()
        })
        .sum();
    let defect = quad.mass_functional(&f).unwrap();
    assert!(predicted.abs() > 1e-4);
    assert!((defect - predicted).abs() <= 0.02 * predicted.abs(), "{defect} vs {predicted}");
}

#[test]
fn truncation_converges_monotonically() {
    let g = Grid::new(1, 512, 20.0).unwrap();
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let f = bump(g, 3.0);
    let reference = OperatorHandle::spectral_fractional(g, 1.0).unwrap().apply(&f).unwrap();
    let mut prev = f64::INFINITY;
    for &eps1 in &[1e-1, 1e-2, 1e-3] {
        let op = OperatorHandle::kernel_quadrature(g, &k, eps1).unwrap();
        let diff = op.apply(&f).unwrap().zip_with(&reference, |a, b| a - b).unwrap();
        let err = diff.lp_norm(2.0) / f.lp_norm(2.0);
        assert!(err < prev, "eps1={eps1}: {err} !< {prev}");
        prev = err;
    }
}

#[test]
fn reported_bound_controls_sup_norm() {
    let g = Grid::new(1, 128, 20.0).unwrap();
    let k = KernelSpec::inhomogeneous_cos(1, 0.6, 0.4, 20.0, InhomogeneousVariant::Midpoint).unwrap();
    let op = OperatorHandle::kernel_quadrature(g, &k, 1e-2).unwrap();
    let kb = op.k_bound().unwrap();
    assert!(kb.is_finite() && kb > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let f = Field::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert!(op.apply(&f).unwrap().sup_norm() <= kb * f.sup_norm());
    }
}

#[test]
fn viscous_scales_coefficients() {
    let g = Grid::new(2, 16, 6.0).unwrap();
    let f = smooth_random(g, 5);
    let lap = OperatorHandle::laplacian(g);
    let v = lap.viscous(&f, 0.3).unwrap();
    let fs = fracpme_core::grid::transform_forward(&f);
    let vs = fracpme_core::grid::transform_forward(&v);
    for k in 0..g.len() {
        let xi2 = g.wavevector_norm(k).powi(2);
        assert!((vs.coeffs()[k] - fs.coeffs()[k] * (-0.3 * xi2)).norm() < 1e-10);
    }
}
