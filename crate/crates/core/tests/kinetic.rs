use fracpme_core::kernels::KernelSpec;
use fracpme_core::kinetic::{
    chi, dissipation_n, dissipation_parabolic, mu_bins, q_bound_check, smooth_plateau, velocity_average,
    DissipationWeights, LedgerRecorder, TestBump, VelocityGrid,
};
use fracpme_core::nonlinearity::NonlinearitySpec;
use fracpme_core::operator::OperatorHandle;
use fracpme_core::solver::{solve, solve_observed, Diagnostics, SolverConfig, Source, Trajectory};
use fracpme_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
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
fn chi_values_and_structure() {
    assert_eq!(chi(2.0, 1.0), 1);
    assert_eq!(chi(-2.0, -1.0), -1);
    for v in [-3.0, -0.1, 0.0, 0.4, 5.0] {
        assert_eq!(chi(0.0, v), 0);
    }
    for &u in &[-1.3, -0.2, 0.0, 0.7, 2.0] {
        for i in 0..41 {
            let v = -2.5 + 0.125 * i as f64;
            let c = chi(u, v);
            assert!(c.abs() <= 1);
            assert!(v.signum() * c as f64 >= 0.0 || v == 0.0);
        }
    }
    // Binned v-derivative: -1 at the bin of u, +1 at the bin of 0.
    let vg = VelocityGrid::new(-2.0, 2.0, 32).unwrap();
    let u = 1.3;
    let c: Vec<i8> = vg.centers().iter().map(|&v| chi(u, v)).collect();
    for k in 1..vg.m_v {
        let jump = (c[k] - c[k - 1]) as i32;
        let edge = vg.edge(k);
        let expected = -((u > edge - vg.dv() * 0.5 && u <= edge + vg.dv() * 0.5) as i32)
            + (0.0 > edge - vg.dv() * 0.5 && 0.0 <= edge + vg.dv() * 0.5) as i32;
        assert_eq!(jump, expected, "k={k}");
    }
}

#[test]
fn velocity_average_examples() {
    let g = Grid::new(1, 8, 1.0).unwrap();
    let vg = VelocityGrid::new(-0.5, 3.0, 64).unwrap();
    let u = Field::constant(g, 1.5);
    let one = velocity_average(&u, &vg, &vec![1.0; 64]).unwrap();
    assert!(one.values().iter().all(|v| (v - 1.5).abs() <= vg.dv()));
    let zero = velocity_average(&u, &vg, &vec![0.0; 64]).unwrap();
    assert!(zero.values().iter().all(|v| *v == 0.0));
    let plateau = smooth_plateau(&vg, 0.0, 1.0, vg.dv()).unwrap();
    assert!((plateau.eta_prime_l1 - 2.0).abs() < 1e-3);
    let clipped = velocity_average(&Field::constant(g, 2.0), &vg, &plateau.samples).unwrap();
    assert!(clipped.values().iter().all(|v| (v - 1.0).abs() <= 2.0 * vg.dv()));
    assert!(velocity_average(&Field::constant(g, 4.0), &vg, &vec![1.0; 64]).is_err());
    assert!(velocity_average(&u, &vg, &vec![2.0; 64]).is_err());
    assert!(VelocityGrid::new(0.0, 1.0, 16).is_err());
}

#[test]
fn n_density_trivial_cases() {
    let g = Grid::new(1, 32, 4.0).unwrap();
    let k = KernelSpec::fractional(1, 0.8).unwrap();
    let w = DissipationWeights::new(g, &k).unwrap();
    let vg = VelocityGrid::new(-1.0, 2.0, 48).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let flat = dissipation_n(&Field::constant(g, 0.7), &vg, &w, &phi).unwrap();
    assert!(flat.values.iter().all(|v| *v == 0.0));
    let u = bump(g, 0.0, 1.0, 1.0);
    let nd = dissipation_n(&u, &vg, &w, &phi).unwrap();
    assert!(nd.values.iter().all(|v| *v >= 0.0));
    for k in 0..vg.m_v {
        if vg.edge(k + 1) <= u.min() || vg.edge(k) >= u.max() {
            assert!((0..g.len()).all(|i| nd.at(i, k) == 0.0), "bin {k}");
        }
    }
}

/// Direct lattice sum `sum_j |u_j - v| k(y_j) h` over `boxes` periods on each side, with the
/// far field (half the points differ) added analytically.
fn step_oracle(g: Grid, u: &[f64], c: f64, i: usize, v: f64, boxes: i64) -> f64 {
    let n = g.n() as i64;
    let h = g.spacing();
    let mut acc = 0.0;
    for jj in -boxes * n..(boxes + 1) * n {
        let off = jj - i as i64;
        if off == 0 {
            continue;
        }
        let uj = u[jj.rem_euclid(n) as usize];
        if uj == u[i] {
            continue;
        }
        let y = off as f64 * h;
        acc += (uj - v).abs() * c * h / (y * y);
    }
    let far = 2.0 * c / (boxes as f64 * g.length());
    let other = if u[i] == 1.0 { v } else { 1.0 - v };
    acc + 0.5 * far * other
}

#[test]
fn n_density_matches_brute_force_oracle() {
    let g = Grid::new(1, 64, 2.0).unwrap();
    let u = Field::from_fn(g, |x| if x[0] < 0.0 { 1.0 } else { 0.0 }).unwrap();
    let k = KernelSpec::fractional(1, 1.0).unwrap();
    let w = DissipationWeights::new(g, &k).unwrap();
    let vg = VelocityGrid::new(-0.5, 1.5, 32).unwrap();
    let nd = dissipation_n(&u, &vg, &w, &identity()).unwrap();
    let mut worst: f64 = 0.0;
    for bin in 0..vg.m_v {
        let v = vg.center(bin);
        if !(v > 0.0 && v < 1.0) {
            continue;
        }
        for i in 0..g.len() {
            let exact = step_oracle(g, u.values(), k.c_da(), i, v, 400);
            worst = worst.max((nd.at(i, bin) - exact).abs() / exact);
        }
    }
    assert!(worst <= 1e-2, "{worst}");
}

#[test]
fn ledger_total_equals_direct_integral() {
    let g = Grid::new(1, 64, 6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = Field::new(g, (0..64).map(|_| rng.gen_range(-0.8..1.2)).collect()).unwrap();
    let k = KernelSpec::fractional(1, 1.3).unwrap();
    let w = DissipationWeights::new(g, &k).unwrap();
    let vg = VelocityGrid::new(-1.0, 1.5, 40).unwrap();
    let nd = dissipation_n(&u, &vg, &w, &identity()).unwrap();
    // int |u_j - v| over conv{u_i, u_j} = (u_j - u_i)^2 / 2 for the identity.
    let mut direct = 0.0;
    for i in 0..g.len() {
        for (o, _, mass) in w.cells() {
            let j = g.shifted(i, *o);
            direct += g.cell_weight() * mass * 0.5 * (u.values()[j] - u.values()[i]).powi(2);
        }
    }
    assert!((nd.total() - direct).abs() <= 1e-6 * direct, "{} vs {direct}", nd.total());
}

#[test]
fn parabolic_binning_examples() {
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let u = Field::from_fn(g, |x| x[0].sin()).unwrap();
    let traj = Trajectory {
        snapshots: vec![u.clone().with_time(0.0), u.clone().with_time(1.0)],
        diagnostics: Vec::<Diagnostics>::new(),
        dt_max: f64::INFINITY,
    };
    for m_v in [32, 64] {
        let vg = VelocityGrid::new(-1.2, 1.2, m_v).unwrap();
        let bins = dissipation_parabolic(&traj, 1.0, &vg).unwrap();
        assert!(bins.iter().all(|b| *b >= 0.0));
        let total: f64 = bins.iter().sum::<f64>() * vg.dv();
        assert!((total - PI).abs() <= 1e-8 * PI, "{total}");
        assert!(dissipation_parabolic(&traj, 0.0, &vg).unwrap().iter().all(|b| *b == 0.0));
    }
}

#[test]
fn mu_supports() {
    let g = Grid::new(1, 128, 8.0).unwrap();
    let u0 = bump(g, 0.0, 2.0, 1.0);
    let vg = VelocityGrid::new(-0.5, 1.5, 32).unwrap();
    let mu = mu_bins(&u0, &vg);
    for (k, mu_k) in mu.iter().enumerate() {
        if vg.edge(k) >= u0.max() || vg.edge(k + 1) <= 0.0 {
            assert_eq!(*mu_k, 0.0);
        }
    }
    // Bin just above 0: average of ||(u0 - v)_+||_1 approaches ||u0||_1.
    let k0 = vg.bin_of(1e-12).unwrap();
    assert!(mu[k0] <= u0.l1_norm() && mu[k0] > 0.8 * u0.l1_norm());
}

fn viscous_run(source: Source) -> (fracpme_core::kinetic::QBoundReport, f64) {
    let g = Grid::new(1, 128, 12.0).unwrap();
    let a = 1.0;
    let k = KernelSpec::fractional(1, a).unwrap();
    let op = OperatorHandle::spectral_fractional(g, a).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let u0 = bump(g, 0.0, 2.0, 1.0);
    let cfg = SolverConfig { dt: 5e-4, t_final: 1.0, eps2: 5e-3, source: source.clone(), ..Default::default() };
    let vg = VelocityGrid::covering(u0.min(), u0.max() + 0.3, 0.1, 48).unwrap();
    let mut rec = LedgerRecorder::new(DissipationWeights::new(g, &k).unwrap(), &phi, vg, cfg.eps2);
    let traj = solve_observed(&u0, &cfg, &op, &phi, |s| rec.observe(s)).unwrap();
    let (ledger, _) = rec.finish(&u0).unwrap();
    let rep = q_bound_check(&ledger, &traj, &u0, &source, cfg.t_final, cfg.dt, 0.05);
    let mut csv = Vec::new();
    ledger.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().next().unwrap(), "v_center,n,m,q,mu");
    (rep, ledger.n_bins.iter().sum::<f64>())
}

#[test]
fn q_bound_on_viscous_run() {
    let (rep, n_total) = viscous_run(Source::Zero);
    assert!(n_total > 0.0);
    assert!(rep.q_bound_holds, "{rep:?}");
    assert!(rep.worst_ratio > 0.5, "{}", rep.worst_ratio);
    assert!(rep.l1_bound_holds);
    assert_eq!(rep.l1_nonincreasing, Some(true));
    let g = Grid::new(1, 128, 12.0).unwrap();
    let (rep, _) = viscous_run(Source::Window { field: bump(g, 3.0, 1.0, 0.5), start: 0.0, end: 0.5 });
    assert!(rep.q_bound_holds, "{rep:?}");
    assert!(rep.l1_bound_holds);
    assert!(rep.source_l1 > 0.0 && rep.l1_nonincreasing.is_none());
}

fn residual_at(n: usize, dt: f64, m_v: usize) -> f64 {
    let g = Grid::new(1, n, 8.0).unwrap();
    let a = 1.0;
    let k = KernelSpec::fractional(1, a).unwrap();
    let op = OperatorHandle::spectral_fractional(g, a).unwrap();
    let phi = NonlinearitySpec::power(2.0).unwrap();
    let u0 = Field::from_fn(g, |x| 0.5 + 0.3 * (-x[0] * x[0]).exp()).unwrap();
    let cfg = SolverConfig { dt, t_final: 0.4, eps2: 2e-2, ..Default::default() };
    let vg = VelocityGrid::new(-0.2, 1.0, m_v).unwrap();
    let tests = [TestBump { t: (0.2, 0.15), x: ([0.3, 0.0], 1.5), v: (0.6, 0.15) }];
    let mut rec = LedgerRecorder::new(DissipationWeights::new(g, &k).unwrap(), &phi, vg, cfg.eps2)
        .with_residuals(&tests, &op)
        .unwrap();
    solve_observed(&u0, &cfg, &op, &phi, |s| rec.observe(s)).unwrap();
    let (_, res) = rec.finish(&u0).unwrap();
    res[0].relative
}

#[test]
fn weak_residual_shrinks_under_refinement() {
    let coarse = residual_at(32, 4e-3, 32);
    let fine = residual_at(64, 2e-3, 64);
    assert!(fine < 0.7 * coarse, "{coarse} -> {fine}");
    assert!(fine < 5e-2, "{fine}");
}

#[test]
fn l1_norm_never_grows_without_source() {
    let g = Grid::new(1, 128, 10.0).unwrap();
    let op = OperatorHandle::spectral_fractional(g, 1.5).unwrap();
    let u0 = bump(g, 0.0, 2.0, 1.0).zip_with(&bump(g, 2.0, 1.0, -0.5), |a, b| a + b).unwrap();
    let cfg = SolverConfig { dt: 1e-3, t_final: 0.3, eps2: 1e-3, ..Default::default() };
    let traj = solve(&u0, &cfg, &op, &NonlinearitySpec::power(2.0).unwrap()).unwrap();
    assert!(traj.diagnostics.iter().all(|d| d.l1 <= 1.01 * u0.l1_norm()));
}
