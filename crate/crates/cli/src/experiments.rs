use crate::config::*;
use crate::output::Outputs;
use fracpme_core::kinetic::{q_bound_check, DissipationWeights, LedgerRecorder, VelocityGrid};
use fracpme_core::nonlinearity::{NonlinearityKind, NonlinearitySpec};
use fracpme_core::norms::{
    besov_mixed_norm, lp_blocks, regularity_sweep, selfsimilar_block_norms, DyadicPartition, SweepLevel,
};
use fracpme_core::operator::OperatorHandle;
use fracpme_core::selfsim::{
    numerical_profile, rescale_field, scaling_drift, time_fixed_amplitude, Profile, ProfileConfig, SelfSimilarSpec, Zkb,
};
use fracpme_core::solver::{solve, solve_observed, SolverConfig, Source, Trajectory};
use fracpme_core::{Error, Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io(_) => "io",
            RunError::Core(e) => match e {
                Error::InvalidGrid(_) => "invalid_grid",
                Error::ShapeMismatch { .. } => "shape_mismatch",
                Error::GridMismatch => "grid_mismatch",
                Error::NonFinite(_) => "non_finite",
                Error::InvalidKernel(_) => "invalid_kernel",
                Error::InvalidNonlinearity(_) => "invalid_nonlinearity",
                Error::InvalidParameter(_) => "invalid_parameter",
                Error::CflViolation { .. } => "cfl_violation",
                Error::BlowUp { .. } => "blow_up",
                Error::Bracketing(_) => "bracketing",
                Error::Resampling { .. } => "resampling",
                Error::NonConvergence { .. } => "non_convergence",
                Error::MissingSnapshot(_) => "missing_snapshot",
                Error::Io(_) => "io",
                Error::Format(_) => "format",
            },
        }
    }
}

type Run = Result<Value, RunError>;

pub fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    match cfg.experiment.as_str() {
        "solve" => run_solve(cfg, out),
        "barenblatt" => run_barenblatt(cfg, out),
        "norms" => run_norms(cfg, out),
        "verify-symbol" => run_verify_symbol(cfg, out),
        "scaling-check" => run_scaling(cfg, out),
        "kinetic-check" => run_kinetic(cfg, out),
        "regularity-sweep" => run_sweep(cfg, out),
        other => unreachable!("validated experiment name {other}"),
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    Error::InvalidParameter(msg.into()).into()
}

fn power_m(phi: &NonlinearitySpec) -> Result<f64, RunError> {
    match phi.kind() {
        NonlinearityKind::Power { m } => Ok(*m),
        _ => Err(invalid("this experiment needs a power nonlinearity")),
    }
}

fn operator(cfg: &ExperimentConfig, grid: Grid) -> Result<OperatorHandle, RunError> {
    Ok(match cfg.operator.mode {
        OperatorMode::SpectralFractional => OperatorHandle::spectral_fractional(grid, cfg.kernel.a)?,
        OperatorMode::SpectralSymbol => OperatorHandle::spectral_symbol(grid, &cfg.kernel()?)?,
        OperatorMode::KernelQuadrature => OperatorHandle::kernel_quadrature(grid, &cfg.kernel()?, cfg.solver.eps1)?,
        OperatorMode::Laplacian => OperatorHandle::laplacian(grid),
    })
}

fn data_field(d: &DataConfig, grid: Grid, cfg: &ExperimentConfig) -> Result<Field, RunError> {
    let centre = |c: &Vec<f64>| -> [f64; 2] { [c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)] };
    let dist2 = |x: [f64; 2], c: [f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    Ok(match d {
        DataConfig::Zero => Field::zeros(grid),
        DataConfig::Bump { center, radius, height } => {
            let c = centre(center);
            Field::from_fn(grid, |x| {
                let s = dist2(x, c) / (radius * radius);
                if s < 1.0 {
                    height * (1.0 - s).powi(3)
                } else {
                    0.0
                }
            })?
        }
        DataConfig::Gaussian { center, width, height } => {
            let c = centre(center);
            Field::from_fn(grid, |x| height * (-dist2(x, c) / (2.0 * width * width)).exp())?
        }
        DataConfig::Indicator { center, radius, height } => {
            let c = centre(center);
            Field::from_fn(grid, |x| if dist2(x, c) < radius * radius { *height } else { 0.0 })?
        }
        DataConfig::Zkb { mass, t0 } => {
            let z = Zkb::new(grid.dim(), power_m(&cfg.phi()?)?, *mass)?;
            z.field(*t0, grid)?
        }
    })
}

fn source(cfg: &ExperimentConfig, grid: Grid) -> Result<Source, RunError> {
    if cfg.source.profile == DataConfig::Zero {
        return Ok(Source::Zero);
    }
    let field = data_field(&cfg.source.profile, grid, cfg)?;
    Ok(match (cfg.source.start, cfg.source.end) {
        (Some(start), Some(end)) => Source::Window { field, start, end },
        _ => Source::Steady(field),
    })
}

fn solver_config(cfg: &ExperimentConfig, source: Source) -> SolverConfig {
    let s = &cfg.solver;
    SolverConfig {
        eps1: s.eps1,
        eps2: s.eps2,
        eps3: s.eps3,
        dt: s.dt,
        t_final: s.t_final,
        scheme: s.scheme,
        source,
        cfl_safety: s.cfl_safety,
        snapshot_stride: if s.snapshot_stride == 0 { usize::MAX } else { s.snapshot_stride },
        lp_exponents: s.lp.clone(),
    }
}

fn write_snapshots(out: &mut Outputs, traj: &Trajectory, prefix: &str) -> Result<(), RunError> {
    for (k, s) in traj.snapshots.iter().enumerate() {
        out.write_with(&format!("{prefix}/u_{k:04}.bin"), |b| s.write_binary(b).map_err(RunError::from))?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

fn run_solve(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let grid = cfg.grid()?;
    let u0 = data_field(&cfg.initial, grid, cfg)?;
    let scfg = solver_config(cfg, source(cfg, grid)?);
    let traj = solve(&u0, &scfg, &operator(cfg, grid)?, &cfg.phi()?)?;
    out.write_with("diagnostics.csv", |b| traj.write_diagnostics_csv(b).map_err(RunError::from))?;
    write_snapshots(out, &traj, "snapshots")?;
    if grid.len() <= 4096 {
        out.write_with("final.csv", |b| traj.final_field().write_csv(b).map_err(RunError::from))?;
    }
    let (first, last) = (&traj.diagnostics[0], traj.diagnostics.last().expect("non-empty"));
    Ok(json!({
        "steps": scfg.steps(),
        "dt_max": traj.dt_max,
        "snapshots": traj.snapshots.len(),
        "mass_initial": first.mass,
        "mass_final": last.mass,
        "l1_final": last.l1,
    }))
}

fn profile_config(b: &BarenblattConfig, dt: f64) -> ProfileConfig {
    ProfileConfig { t_end: b.t_end, dt, bump_radius: b.bump_radius, y_max: b.y_max, samples: b.samples }
}

fn relaxed_profile(cfg: &ExperimentConfig, spec: &SelfSimilarSpec, grid: Grid) -> Result<Profile, RunError> {
    let p = numerical_profile(spec, grid, &profile_config(&cfg.barenblatt_section(), cfg.solver.dt))?;
    Ok(p)
}

fn run_barenblatt(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let grid = cfg.grid()?;
    let phi = cfg.phi()?;
    let b = cfg.barenblatt_section();
    let spec = SelfSimilarSpec::new(grid.dim(), power_m(&phi)?, cfg.kernel.a, b.mass)?;
    if cfg.kernel.a == 2.0 {
        // Start from the closed form at t = 1 and compare at t = 1 + t_final.
        let z = Zkb::from_spec(&spec)?;
        let scfg = solver_config(cfg, Source::Zero);
        let traj = solve(&z.field(1.0, grid)?, &scfg, &operator(cfg, grid)?, &phi)?;
        let t_end = 1.0 + scfg.t_final;
        let exact = z.field(t_end, grid)?;
        let err = traj.final_field().zip_with(&exact, |a, b| a - b)?.l1_norm() / exact.l1_norm();
        let dy = b.y_max / b.samples as f64;
        out.write_table(
            "profile.csv",
            &["y", "v"],
            (0..=b.samples).map(|k| vec![num(k as f64 * dy), num(z.profile(k as f64 * dy))]),
        )?;
        if grid.dim() == 1 {
            let rows = (0..grid.len()).map(|k| {
                vec![num(grid.position(k)[0]), num(traj.final_field().values()[k]), num(exact.values()[k])]
            });
            out.write_table("comparison.csv", &["x", "numerical", "exact"], rows)?;
        }
        return Ok(json!({ "mode": "closed_form", "t_end": t_end, "l1_relative_error": err, "c": z.c, "kappa": z.kappa,
            "alpha": spec.alpha, "beta": spec.beta }));
    }
    let p = relaxed_profile(cfg, &spec, grid)?;
    out.write_with("profile.csv", |w| p.write_csv(w).map_err(RunError::from))?;
    if !p.converged {
        return Err(Error::NonConvergence { gap: p.gap, threshold: Profile::GAP_THRESHOLD }.into());
    }
    Ok(json!({ "mode": "relaxed", "gap": p.gap, "mass": p.mass, "asymmetry": p.asymmetry, "converged": p.converged,
        "alpha": spec.alpha, "beta": spec.beta }))
}

fn run_norms(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let grid = cfg.grid()?;
    let n = cfg.norms_section();
    let part = DyadicPartition::default();
    match n.data {
        NormsData::Trajectory => {
            let steps = (cfg.solver.t_final / cfg.solver.dt).round() as usize;
            if !steps.is_multiple_of(n.time_samples) {
                return Err(invalid("the step count must be a multiple of time_samples"));
            }
            let mut scfg = solver_config(cfg, source(cfg, grid)?);
            scfg.snapshot_stride = steps / n.time_samples;
            let traj = solve(&data_field(&cfg.initial, grid, cfg)?, &scfg, &operator(cfg, grid)?, &cfg.phi()?)?;
            let blocks = lp_blocks(&traj.snapshots[..n.time_samples], scfg.t_final, n.p, &part)?;
            out.write_with("blocks.csv", |w| blocks.write_csv(w).map_err(RunError::from))?;
            let q = if n.q.is_finite() { n.q } else { f64::INFINITY };
            Ok(json!({
                "p": n.p,
                "besov": besov_mixed_norm(&blocks, n.sigma_t, n.sigma_x, q),
                "spatial_slope": blocks.spatial_slope(n.fit[0], n.fit[1]).ok(),
                "temporal_slope": blocks.temporal_slope(1, n.time_samples.trailing_zeros() as usize).ok(),
            }))
        }
        NormsData::SelfSimilar => {
            let phi = cfg.phi()?;
            let m = power_m(&phi)?;
            let b = cfg.barenblatt_section();
            let spec = SelfSimilarSpec::new(grid.dim(), m, cfg.kernel.a, b.mass)?;
            let profile = if cfg.kernel.a == 2.0 {
                let z = Zkb::from_spec(&spec)?;
                Field::from_fn(grid, |x| z.profile(x[0].hypot(x[1])))?
            } else {
                let coarse = Grid::new(grid.dim(), n.profile_n, n.profile_length)?;
                let p = relaxed_profile(cfg, &spec, coarse)?;
                if !p.converged {
                    return Err(Error::NonConvergence { gap: p.gap, threshold: Profile::GAP_THRESHOLD }.into());
                }
                Field::from_fn(grid, |x| p.eval(x[0]))?
            };
            let sb = selfsimilar_block_norms(&profile, spec.alpha, spec.beta, n.p, cfg.solver.t_final, 0..=n.j_max, &part)?;
            out.write_table("selfsim_blocks.csv", &["j", "norm"], sb.entries.iter().map(|(j, v)| vec![j.to_string(), num(*v)]))?;
            Ok(json!({
                "p": n.p,
                "gamma": sb.gamma,
                "slope": sb.slope(n.fit[0], n.fit[1])?,
                "reference_slope": -cfg.kernel.a / m,
            }))
        }
    }
}

fn run_verify_symbol(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let kernel = cfg.kernel()?;
    let s = cfg.verify_symbol_section();
    let (d, half) = (cfg.grid.d, 0.5 * cfg.grid.length);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<([f64; 2], [f64; 2])> = (0..s.samples)
        .map(|_| {
            let mut x = [0.0; 2];
            for c in x.iter_mut().take(d) {
                *c = rng.gen_range(-half..half);
            }
            let r = 2f64.powf(rng.gen_range(s.log2_xi_min..=s.log2_xi_max));
            let xi = if d == 1 {
                [if rng.gen_bool(0.5) { r } else { -r }, 0.0]
            } else {
                let th = rng.gen_range(0.0..2.0 * PI);
                [r * th.cos(), r * th.sin()]
            };
            (x, xi)
        })
        .collect();
    let rep = kernel.verify_symbol_bounds(&samples, &Default::default());
    out.write("bound_report.json", rep.to_json().as_bytes())?;
    let a = kernel.order();
    let rows = rep.samples.iter().map(|p| {
        let r = p.xi[0].hypot(p.xi[1]);
        vec![num(p.x[0]), num(p.x[1]), num(p.xi[0]), num(p.xi[1]), num(p.value.re), num(p.value.im), num(p.value.re / r.powf(a))]
    });
    out.write_table("symbols.csv", &["x0", "x1", "xi0", "xi1", "re", "im", "re_over_xi_a"], rows)?;
    Ok(json!({
        "c_est": rep.c_est,
        "m_est": rep.m_est,
        "fitted_c_prime": rep.fitted_c_prime,
        "growth_violations": rep.growth_violations,
        "violations": rep.violations,
        "warnings": rep.warnings,
    }))
}

fn run_scaling(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let grid = cfg.grid()?;
    let phi = cfg.phi()?;
    let m = power_m(&phi)?;
    let a = cfg.kernel.a;
    let s = cfg.scaling_section();
    let u0 = data_field(&cfg.initial, grid, cfg)?;
    let w0 = rescale_field(&u0, time_fixed_amplitude(m, a, s.nu), s.nu, s.resample_tol)?;
    let mut scfg = solver_config(cfg, Source::Zero);
    if cfg.solver.snapshot_stride == 0 {
        scfg.snapshot_stride = (scfg.steps() / 20).max(1);
    }
    let op = operator(cfg, grid)?;
    let (ua, ub) = rayon::join(|| solve(&u0, &scfg, &op, &phi), || solve(&w0, &scfg, &op, &phi));
    let (ua, ub) = (ua?, ub?);
    let sigmas = if s.sigmas.is_empty() {
        let sx = (s.mu_power * s.p - 1.0) / s.p * a / (m - 1.0);
        (-2..=2).map(|k| sx + 0.05 * k as f64).collect()
    } else {
        s.sigmas.clone()
    };
    let rep = scaling_drift(&ua, &ub, s.nu, m, a, s.p, s.mu_power, &sigmas)?;
    out.write_table("drift.csv", &["sigma", "drift"], rep.sigmas.iter().zip(&rep.drifts).map(|(x, y)| vec![num(*x), num(*y)]))?;
    Ok(serde_json::to_value(&rep).expect("report serializes"))
}

fn run_kinetic(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let grid = cfg.grid()?;
    let phi = cfg.phi()?;
    let kernel = cfg.kernel()?;
    let k = cfg.kinetic_section();
    let u0 = data_field(&cfg.initial, grid, cfg)?;
    let src = source(cfg, grid)?;
    let scfg = solver_config(cfg, src.clone());
    let vg = VelocityGrid::covering(u0.min(), u0.max() + k.headroom, k.margin, k.bins)?;
    let mut rec = LedgerRecorder::new(DissipationWeights::new(grid, &kernel)?, &phi, vg, scfg.eps2).with_n_stride(k.n_stride.max(1));
    let traj = solve_observed(&u0, &scfg, &operator(cfg, grid)?, &phi, |st| rec.observe(st))?;
    let (ledger, _) = rec.finish(&u0)?;
    let rep = q_bound_check(&ledger, &traj, &u0, &src, scfg.t_final, scfg.dt, k.slack);
    out.write_with("ledger.csv", |w| ledger.write_csv(w).map_err(RunError::from))?;
    out.write_with("diagnostics.csv", |w| traj.write_diagnostics_csv(w).map_err(RunError::from))?;
    Ok(json!({ "q_bound": rep, "clamped_points": ledger.clamped_points }))
}

fn run_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Run {
    let s = cfg.sweep_section();
    let phi = cfg.phi()?;
    let m = power_m(&phi)?;
    let a = cfg.kernel.a;
    let (d, length) = (cfg.grid.d, cfg.grid.length);
    let levels = match s.data {
        SweepData::ClosedForm => {
            if a != 2.0 {
                return Err(invalid("closed-form sweep data needs a = 2"));
            }
            let z = Zkb::new(d, m, s.mass)?;
            let r1 = (z.c / z.kappa).sqrt();
            let beta = z.spec.beta;
            // Support from a quarter of the box down to eight cells, log-spaced by sqrt 2.
            let t_max = (length / (4.0 * r1)).powf(1.0 / beta);
            s.levels
                .iter()
                .map(|&n| {
                    let g = Grid::new(d, n, length)?;
                    let t_min = (8.0 * g.spacing() / r1).powf(1.0 / beta);
                    let mut snaps = Vec::new();
                    let mut t = t_max;
                    while t >= t_min * (1.0 - 1e-9) {
                        snaps.push(z.field(t, g)?);
                        t /= 2f64.sqrt();
                    }
                    snaps.reverse();
                    Ok(SweepLevel { n, snapshots: snaps })
                })
                .collect::<Result<Vec<_>, RunError>>()?
        }
        SweepData::Solver => {
            let mut scfg = solver_config(cfg, Source::Zero);
            if cfg.solver.snapshot_stride == 0 {
                scfg.snapshot_stride = (scfg.steps() / 8).max(1);
            }
            s.levels
                .iter()
                .map(|&n| {
                    let g = Grid::new(d, n, length)?;
                    let traj = solve(&data_field(&cfg.initial, g, cfg)?, &scfg, &operator(cfg, g)?, &phi)?;
                    Ok(SweepLevel { n, snapshots: traj.snapshots })
                })
                .collect::<Result<Vec<_>, RunError>>()?
        }
    };
    let sigmas = if s.sigmas.is_empty() {
        let centre = a * s.mu_power / m;
        (-8..=8)
            .map(|k| centre + 0.05 * k as f64)
            .filter(|x| *x > 0.0 && (x - x.round()).abs() > 1e-9)
            .collect()
    } else {
        s.sigmas.clone()
    };
    let rep = regularity_sweep(&levels, s.p, s.mu_power, &sigmas, (s.fit[0], s.fit[1]))?;
    out.write_with("sweep.csv", |w| rep.write_csv(w).map_err(RunError::from))?;
    Ok(json!({
        "threshold": rep.threshold,
        "reference_threshold": a * s.mu_power / m,
        "spatial_slope": rep.spatial_slope,
        "temporal_slope": rep.temporal_slope,
        "verdicts": rep.verdicts,
    }))
}
