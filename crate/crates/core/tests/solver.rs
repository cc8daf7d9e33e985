use fracpme_core::nonlinearity::NonlinearitySpec;
use fracpme_core::operator::OperatorHandle;
use fracpme_core::solver::{l1_contraction_check, lp_estimate_check, solve, Scheme, SolverConfig, Source};
use fracpme_core::{Error, Field, Grid};
use std::f64::consts::PI;

fn identity() -> NonlinearitySpec {
    NonlinearitySpec::shifted(&NonlinearitySpec::zero(), 1.0).unwrap()
}

fn bump(grid: Grid, center: f64, radius: f64, height: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r2 = ((x[0] - center) / radius).powi(2);
        if r2 < 1.0 {
            height * (1.0 - r2).powi(2)
        } else {
            0.0
        }
    })
    .unwrap()
}

#[test]
fn heat_limit_reproduces_exponential_decay() {
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 2.0).unwrap();
    let u0 = Field::from_fn(g, |x| x[0].cos()).unwrap();
    let cfg = SolverConfig { dt: 1e-4, t_final: 1.0, ..Default::default() };
    let traj = solve(&u0, &cfg, &op, &identity()).unwrap();
    let exact = Field::from_fn(g, |x| (-1.0f64).exp() * x[0].cos()).unwrap();
    let err = traj.final_field().zip_with(&exact, |a, b| a - b).unwrap().sup_norm();
    assert!(err <= 5e-4, "{err}");
    // Forward Euler on the exact mode: error of order dt.
    assert!(err > 1e-6);
}

#[test]
fn explicit_and_imex_agree_and_refine_in_dt() {
    let g = Grid::new(1, 128, 10.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let u0 = bump(g, 0.0, 2.0, 1.0);
    let run = |dt: f64, scheme| {
        let cfg = SolverConfig { dt, t_final: 0.2, scheme, eps2: 1e-3, ..Default::default() };
        solve(&u0, &cfg, &op, &phi).unwrap().final_field().clone()
    };
    let fine = run(2.5e-4, Scheme::ImexSpectral);
    let e1 = run(2e-3, Scheme::ImexSpectral).zip_with(&fine, |a, b| a - b).unwrap().l1_norm();
    let e2 = run(1e-3, Scheme::ImexSpectral).zip_with(&fine, |a, b| a - b).unwrap().l1_norm();
    let ratio = e1 / e2;
    assert!(ratio > 1.6 && ratio < 2.6, "first order expected: {ratio}");
    let ex = run(1e-3, Scheme::Explicit).zip_with(&fine, |a, b| a - b).unwrap().l1_norm();
    assert!(ex < 1.5 * e1, "{ex}");
}

#[test]
fn mass_is_conserved_without_source() {
    let g = Grid::new(1, 256, 16.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let u0 = bump(g, 0.5, 2.0, 1.0);
    for a in [1.0, 2.0] {
        let op = OperatorHandle::spectral_fractional(g, a).unwrap();
        let cfg = SolverConfig { dt: 1e-4, t_final: 0.5, eps2: 1e-3, ..Default::default() };
        let traj = solve(&u0, &cfg, &op, &phi).unwrap();
        let m0 = traj.diagnostics[0].mass;
        let drift = traj.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-10 * m0.abs().max(1.0), "a={a}: {drift}");
    }
}

#[test]
fn source_adds_its_mass() {
    let g = Grid::new(1, 128, 10.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let s = bump(g, 1.0, 1.0, 0.5);
    let cfg = SolverConfig {
        dt: 1e-3,
        t_final: 0.4,
        source: Source::Window { field: s.clone(), start: 0.0, end: 0.2 },
        ..Default::default()
    };
    let traj = solve(&Field::zeros(g), &cfg, &op, &phi).unwrap();
    let expected = 0.2 * s.integral();
    assert!((traj.final_field().integral() - expected).abs() < 1e-9 * expected);
}

#[test]
fn contraction_and_order_preservation() {
    let g = Grid::new(1, 256, 16.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let lo = bump(g, 0.0, 2.0, 0.8);
    let hi = lo.zip_with(&bump(g, 1.0, 1.5, 0.4), |a, b| a + b).unwrap();
    let cfg = SolverConfig { dt: 1e-3, t_final: 0.5, eps2: 1e-3, snapshot_stride: 1, ..Default::default() };
    let rep = l1_contraction_check((&hi, &lo), (&Source::Zero, &Source::Zero), &cfg, &op, &phi).unwrap();
    assert!(rep.bound_holds);
    assert!(rep.max_growth <= 1.0 + 1e-9, "{}", rep.max_growth);
    let a = solve(&lo, &cfg, &op, &phi).unwrap();
    let b = solve(&hi, &cfg, &op, &phi).unwrap();
    // Comparison holds up to the spectral ringing of the discrete scheme.
    let worst = a
        .final_field()
        .zip_with(b.final_field(), |x, y| x - y)
        .unwrap()
        .max();
    assert!(worst <= 1e-3, "{worst}");

    let s1 = Source::Steady(bump(g, -2.0, 1.0, 0.3));
    let rep = l1_contraction_check((&lo, &lo), (&s1, &Source::Zero), &cfg, &op, &phi).unwrap();
    assert!(rep.bound_holds);
    assert!(rep.gaps.last().unwrap() > &0.0);
}

#[test]
fn lp_norms_do_not_grow() {
    let g = Grid::new(1, 256, 16.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.5).unwrap();
    let phi = NonlinearitySpec::power(3.0).unwrap();
    let u0 = bump(g, 0.0, 2.5, 1.0);
    let cfg = SolverConfig { dt: 5e-4, t_final: 0.3, eps2: 1e-3, lp_exponents: vec![1.5, 2.0, 4.0], ..Default::default() };
    let traj = solve(&u0, &cfg, &op, &phi).unwrap();
    for p in [1.5, 2.0, 4.0] {
        let rep = lp_estimate_check(&traj, p, &u0, &Source::Zero, cfg.t_final, cfg.dt).unwrap();
        assert_eq!(rep.nonincreasing, Some(true), "p={p}");
        assert!(rep.k <= 1.0 + 1e-6, "p={p}: {}", rep.k);
    }
    assert!(lp_estimate_check(&traj, 7.0, &u0, &Source::Zero, cfg.t_final, cfg.dt).is_err());
}

#[test]
fn energy_balance_for_heat_flow() {
    // u_t = eps2 u_xx only: d/dt ||u||_2^2 / 2 = -eps2 ||u_x||^2.
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 2.0).unwrap();
    let u0 = Field::from_fn(g, |x| (2.0 * x[0]).sin() + 0.5).unwrap();
    let cfg = SolverConfig { dt: 1e-4, t_final: 0.5, eps2: 0.2, ..Default::default() };
    let traj = solve(&u0, &cfg, &op, &NonlinearitySpec::zero()).unwrap();
    let first = &traj.diagnostics[0];
    let last = traj.diagnostics.last().unwrap();
    let drop = 0.5 * (first.lp[0].1.powi(2) - last.lp[0].1.powi(2));
    assert!((drop - last.energy).abs() <= 2e-3 * drop, "{drop} vs {}", last.energy);
}

#[test]
fn rejects_unstable_steps_and_bad_configs() {
    let g = Grid::new(1, 256, 10.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 2.0).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let u0 = bump(g, 0.0, 2.0, 1.0);
    let cfg = SolverConfig { dt: 1e-2, t_final: 0.1, ..Default::default() };
    assert!(matches!(solve(&u0, &cfg, &op, &phi), Err(Error::CflViolation { .. })));
    let cfg = SolverConfig { dt: 1e-3, t_final: 0.0105, ..Default::default() };
    assert!(matches!(solve(&u0, &cfg, &op, &phi), Err(Error::InvalidParameter(_))));
    let other = Field::zeros(Grid::new(1, 128, 10.0).unwrap());
    let cfg = SolverConfig { dt: 1e-5, t_final: 1e-4, ..Default::default() };
    assert!(matches!(solve(&other, &cfg, &op, &phi), Err(Error::GridMismatch)));
}

#[test]
fn diagnostics_csv_and_snapshots() {
    let g = Grid::new(1, 32, 4.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.0).unwrap();
    let u0 = bump(g, 0.0, 1.0, 1.0);
    let cfg = SolverConfig { dt: 1e-2, t_final: 0.1, snapshot_stride: 5, lp_exponents: vec![2.0, 3.0], ..Default::default() };
    let traj = solve(&u0, &cfg, &op, &NonlinearitySpec::power(2.0).unwrap()).unwrap();
    assert_eq!(traj.snapshots.len(), 3);
    assert!(traj.snapshot_at(0.05).is_ok());
    assert!(matches!(traj.snapshot_at(0.07), Err(Error::MissingSnapshot(_))));
    let mut buf = Vec::new();
    traj.write_diagnostics_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,mass,l1,l2,l3,energy");
    assert_eq!(text.lines().count(), 12);
}
