//! Check and run stages behind the command-line interface.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    CoordinateKind, CustomParams, GainKind, ObjectiveSpec, ScenarioConfig, ScenarioKind, SourceParams, Topology,
};
use crate::apps::lemma::{lemma1_check, random_pairs, Objective};
use crate::apps::network::{complete_graph, cycle_graph, default_topology, path_graph};
use crate::apps::source_seeking::{
    self, agent_csv, averaged_system, closed_loop, equilibrium_residual, summarize, Coordinates, SourceSeekingScenario,
};
use crate::apps::{feedback_opt, integral, saturated};
use crate::certificates::{
    admits_rho_s0, build_gtilde_s, build_max_lyapunov, check_decrease_along_trajectory, derive_rho_s0, find_c0_max,
    sample_states, verify_assumption2, verify_theorem1, CertificateCurves, ISSCertificate, SampleBox, TheoremConditions,
};
use crate::comparison::{ComparisonCurve, CurveClass, LogGrid};
use crate::error::{Error, Result};
use crate::report::Report;
use crate::system::{check_steady_state_map, simulate_batch, Dims, PerturbedSystem, Trajectory};

/// Stream offset separating initial-condition draws from state samples.
const INITIAL_STREAM: u64 = 1 << 40;

/// Everything a scenario contributes to checks and simulation.
pub struct Bundle {
    pub system: PerturbedSystem,
    pub certificate: Option<ISSCertificate>,
    pub conditions: Option<TheoremConditions>,
    pub g_breve: Option<ComparisonCurve>,
    /// `(x_eq, z_eq)` used for convergence checks.
    pub equilibrium: (Vec<f64>, Vec<f64>),
    pub source: Option<(SourceSeekingScenario, Coordinates)>,
}

fn objective(spec: &ObjectiveSpec, dim: usize) -> Result<Objective> {
    match spec {
        ObjectiveSpec::Quadratic { center, scale } => Ok(Objective::quadratic(center.clone(), *scale)),
        ObjectiveSpec::QuadraticPlusSine if dim >= 1 => Ok(Objective::quadratic_plus_sine()),
        ObjectiveSpec::QuadraticPlusSine => Err(Error::InvalidConfig("source objective needs dimension >= 1".into())),
    }
}

pub fn source_scenario(p: &SourceParams, seed: u64) -> Result<SourceSeekingScenario> {
    let agents = p.formation.len();
    let adjacency = match (&p.adjacency, p.topology) {
        (Some(rows), _) => {
            if rows.len() != agents || rows.iter().any(|r| r.len() != agents) {
                return Err(Error::InvalidConfig(format!("source.adjacency must be {agents}x{agents}")));
            }
            nalgebra::DMatrix::from_fn(agents, agents, |i, j| rows[i][j])
        }
        (None, Topology::Default) => default_topology(agents),
        (None, Topology::Complete) => complete_graph(agents),
        (None, Topology::Cycle) => cycle_graph(agents),
        (None, Topology::Path) => path_graph(agents),
    };
    let scn = SourceSeekingScenario::from_formation(
        &p.formation,
        adjacency,
        p.mu,
        p.c0,
        objective(&p.objective, p.p_star.len())?,
        p.p_star.clone(),
        p.p_epsilon,
    )?;
    scn.validate(seed).map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("source: {msg}")),
        other => other,
    })?;
    Ok(scn)
}

fn custom_certificate(p: &CustomParams) -> Result<ISSCertificate> {
    let c = &p.certificate;
    let curves = CertificateCurves {
        slow_lower_bound: c.slow_lower_bound.build()?,
        slow_upper_bound: c.slow_upper_bound.build()?,
        slow_gain: c.slow_gain.build()?,
        slow_input_gain: None,
        slow_decay: c.slow_decay.build()?,
        fast_lower_bound: c.fast_lower_bound.build()?,
        fast_upper_bound: c.fast_upper_bound.build()?,
        fast_input_gain: None,
        fast_decay: c.fast_decay.build()?,
        cross_fast: c.cross_fast.build()?,
        cross_slow: c.cross_slow.build()?,
    };
    Ok(ISSCertificate::quadratic_shift(p.k_s, p.k_f, vec![0.0], curves))
}

fn custom_system(p: &CustomParams) -> Result<PerturbedSystem> {
    let (h_s, h_f, rate) = (p.slow_field.build()?, p.fast_field.build()?, p.slow_rate.build()?);
    Ok(PerturbedSystem::new("custom", Dims::new(1, 1, 0, 0))
        .slow(move |_, z, _, out| out[0] = -z[0].signum() * h_s.eval(z[0].abs()))
        .fast(move |z, x, _, out| {
            let e = z[0] - x[0];
            out[0] = -e.signum() * h_f.eval(e.abs())
        })
        .slow_rate(move |_, z, _| rate.eval(z[0].abs()))
        .steady_state(|x, out| out[0] = x[0]))
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(other.to_string()),
    }
}

pub fn build_bundle(cfg: &ScenarioConfig) -> Result<Bundle> {
    let scalar_origin = |z: f64| (vec![0.0], vec![z]);
    let bundle = match cfg.scenario {
        ScenarioKind::Example1Saturated => {
            let p = cfg.example1.as_ref().expect("validated");
            Bundle {
                system: saturated::system(p.c0),
                certificate: Some(saturated::certificate(p.varrho)),
                conditions: Some(saturated::conditions(p.varrho, p.c0, p.eta)?),
                g_breve: Some(saturated::g_breve()),
                equilibrium: scalar_origin(0.0),
                source: None,
            }
        }
        ScenarioKind::Example2FeedbackOpt => {
            let p = cfg.example2.as_ref().expect("validated");
            let (law, conditions) = match p.gain {
                GainKind::Quadratic => (
                    feedback_opt::GainLaw::Quadratic(p.coeff),
                    Some(feedback_opt::conditions(p.coeff, p.rho_upper_coeff)),
                ),
                GainKind::Constant => (feedback_opt::GainLaw::Constant(p.coeff), None),
            };
            Bundle {
                system: feedback_opt::system(law),
                certificate: Some(feedback_opt::certificate()),
                conditions,
                g_breve: Some(feedback_opt::g_breve()),
                equilibrium: (vec![feedback_opt::EQUILIBRIUM.0], vec![feedback_opt::EQUILIBRIUM.1]),
                source: None,
            }
        }
        ScenarioKind::IntegralControl => {
            let p = cfg.integral.as_ref().expect("validated");
            Bundle {
                system: integral::system(p.nonlinear, p.coeff),
                certificate: Some(integral::certificate()),
                conditions: p.nonlinear.then(|| integral::conditions(p.coeff)),
                g_breve: Some(integral::g_breve()),
                equilibrium: scalar_origin(0.0),
                source: None,
            }
        }
        ScenarioKind::SourceSeeking => {
            let p = cfg.source.as_ref().expect("validated");
            let scn = source_scenario(p, cfg.seed)?;
            let coords = match p.coordinates {
                CoordinateKind::Full => Coordinates::Full,
                CoordinateKind::Reduced => Coordinates::Reduced,
            };
            let (x_eq, z_eq) = source_seeking::closed_loop_equilibrium(&scn, coords)?;
            Bundle {
                system: closed_loop(&scn, coords)?,
                certificate: None,
                conditions: None,
                g_breve: None,
                equilibrium: (x_eq, z_eq),
                source: Some((scn, coords)),
            }
        }
        ScenarioKind::Custom => {
            let p = cfg.custom.as_ref().expect("validated");
            let conditions = match &p.conditions {
                Some(c) => Some(
                    TheoremConditions::new(
                        c.rho_lower_s.build()?,
                        c.gamma_f.build()?,
                        c.rho_upper_s.build()?.with_class(CurveClass::P),
                        c.rho_lower_f.build()?.with_class(CurveClass::P),
                    ),
                ),
                None => None,
            };
            Bundle {
                system: custom_system(p).map_err(config_error)?,
                certificate: Some(custom_certificate(p).map_err(config_error)?),
                conditions,
                g_breve: Some(p.g_breve.build().map_err(config_error)?),
                equilibrium: scalar_origin(0.0),
                source: None,
            }
        }
    };
    bundle.with_grid(cfg)
}

impl Bundle {
    fn with_grid(mut self, cfg: &ScenarioConfig) -> Result<Self> {
        let grid = cfg.grid.build()?;
        self.conditions = self.conditions.map(|c| c.with_grid(grid));
        Ok(self)
    }
}

fn grid(cfg: &ScenarioConfig) -> Result<LogGrid> {
    cfg.grid.build()
}

/// Verification only: certificate conditions, steady-state map and the
/// scenario-specific bounds.
pub fn check(cfg: &ScenarioConfig, bundle: &Bundle) -> Result<Report> {
    let mut report = Report::new(cfg.scenario.name());
    let bx = SampleBox::new(cfg.samples.half_width, cfg.samples.random, cfg.seed);

    if let Some((scn, _)) = &bundle.source {
        check_source(cfg, scn, &mut report)?;
        return Ok(report);
    }

    let samples = sample_states(&bundle.system, &bx);
    if cfg.checks.steady_state {
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        let ss = check_steady_state_map(&bundle.system, &xs, 1e-10)?;
        report.check("steady_state", ss.pass, xs.len(), ss.tol - ss.max_residual, format!("x={:?}", ss.worst_x));
        report.value("steady_state.origin_residual", format!("{:e}", ss.origin_residual));
    }
    if let (true, Some(cert)) = (cfg.checks.assumption2, &bundle.certificate) {
        let mut v = verify_assumption2(&bundle.system, cert, &samples);
        v.region = bx.describe();
        report.verification("assumption2", &v);
    }
    if let (true, Some(cert), Some(cond)) = (cfg.checks.theorem1, &bundle.certificate, &bundle.conditions) {
        let mut v = verify_theorem1(&bundle.system, cert, cond, &samples)?;
        v.region = bx.describe();
        report.verification("theorem1", &v);
    }

    match cfg.scenario {
        ScenarioKind::Example1Saturated => {
            let p = cfg.example1.as_ref().expect("validated");
            let grid = grid(cfg)?;
            let own = find_c0_max(&saturated::certificate(p.varrho), &saturated::g_breve(), &grid)?;
            report.check(
                "c0_bound",
                !own.unsatisfiable && p.c0 < own.c0_max,
                grid.points,
                own.c0_max - p.c0,
                format!("r={:e}", own.worst_r),
            );
            report.value("c0_max_at_varrho", own.c0_max);
            if !p.varrho_sweep.is_empty() {
                let sweep = saturated::c0_threshold_sweep(&p.varrho_sweep, &grid)?;
                report.value("c0_max", sweep.c0_max);
                report.value("best_varrho", sweep.best_varrho);
            }
        }
        ScenarioKind::Example2FeedbackOpt | ScenarioKind::IntegralControl => {
            if let (Some(cert), Some(cond), Some(g_breve)) = (&bundle.certificate, &bundle.conditions, &bundle.g_breve) {
                let coeff = match (&cfg.example2, &cfg.integral) {
                    (Some(p), _) if cfg.scenario == ScenarioKind::Example2FeedbackOpt => p.coeff,
                    (_, Some(p)) => p.coeff,
                    _ => unreachable!("validated"),
                };
                let g_tilde = build_gtilde_s(cert, &cond.gamma_f, g_breve)?;
                match derive_rho_s0(&cond.rho_upper_s, &g_tilde, &cond.grid) {
                    Ok(rho) => report.value("rho_s0_coefficient", rho.eval(1.0)),
                    Err(e) => report.value("rho_s0_coefficient", format!("unavailable ({e})")),
                }
                let admits = admits_rho_s0(&ComparisonCurve::power(coeff, 2.0), &cond.rho_upper_s, &g_tilde, &cond.grid)?;
                report.condition("synthesis", &admits);
            }
        }
        ScenarioKind::Custom => {
            if let (Some(cert), Some(g_breve)) = (&bundle.certificate, &bundle.g_breve) {
                match find_c0_max(cert, g_breve, &grid(cfg)?) {
                    Ok(b) => report.value("c0_max", b.c0_max),
                    Err(e) => report.value("c0_max", format!("unavailable ({e})")),
                }
            }
        }
        ScenarioKind::SourceSeeking => {}
    }
    Ok(report)
}

fn check_source(cfg: &ScenarioConfig, scn: &SourceSeekingScenario, report: &mut Report) -> Result<()> {
    let mats = scn.network()?;
    let residual = mats.lyapunov_residual();
    report.check("network.lyapunov_residual", residual <= 1e-8, 1, 1e-8 - residual, "");
    let abscissa = mats.spectral_abscissa();
    report.check("network.hurwitz", abscissa < 0.0, 1, -abscissa, "");

    if cfg.checks.steady_state {
        let avg = averaged_system(scn)?;
        let bx = SampleBox::new(cfg.samples.half_width, cfg.samples.random.min(200), cfg.seed);
        let xs: Vec<Vec<f64>> = sample_states(&avg, &bx).into_iter().map(|s| s.x).collect();
        let ss = check_steady_state_map(&avg, &xs, 1e-10)?;
        report.check("steady_state", ss.pass, xs.len(), ss.tol - ss.max_residual, format!("x={:?}", ss.worst_x));
        report.value("steady_state.origin_residual", format!("{:e}", ss.origin_residual));
        let worst = xs
            .iter()
            .map(|x| {
                let p0: Vec<f64> = x.iter().zip(&scn.p_star).map(|(a, b)| a + b).collect();
                equilibrium_residual(scn, &p0)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        report.value("equilibrium_map.max_residual", format!("{worst:e}"));
    }

    let pairs = random_pairs(scn.dim, 1000, 10.0, cfg.seed);
    let lemma = lemma1_check(&scn.objective, scn.objective.theta, &pairs);
    report.check("lemma1", lemma.pass, lemma.checked, 1.0 - lemma.worst_ratio, "");
    report.value("estimator.decay_rate", -abscissa);
    Ok(())
}

/// Seeded initial conditions: the explicit list followed by uniform draws
/// with `|x_i|, |z_j| ≤ half_width`.
pub fn initial_conditions(cfg: &ScenarioConfig, dims: Dims) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = dims.n;
    let mut out: Vec<(Vec<f64>, Vec<f64>)> =
        cfg.initial.states.iter().map(|s| (s[..n].to_vec(), s[n..].to_vec())).collect();
    let h = cfg.initial.half_width;
    for i in 0..cfg.initial.random {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(INITIAL_STREAM + i as u64);
        let x = (0..dims.n).map(|_| rng.random_range(-h..=h)).collect();
        let z = (0..dims.m).map(|_| rng.random_range(-h..=h)).collect();
        out.push((x, z));
    }
    out
}

fn source_initial(cfg: &ScenarioConfig, bundle: &Bundle) -> Vec<(Vec<f64>, Vec<f64>)> {
    let Dims { n, m, .. } = bundle.system.dims;
    if !cfg.initial.states.is_empty() {
        return initial_conditions(cfg, bundle.system.dims);
    }
    let p = cfg.source.as_ref().expect("validated");
    let x = match &p.positions {
        Some(rows) => rows.iter().flatten().copied().collect(),
        None => vec![0.0; n],
    };
    vec![(x, vec![0.0; m])]
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    /// Set when a trajectory failed to converge although convergence was expected.
    pub unexpected_divergence: Option<String>,
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.unexpected_divergence.is_some() {
            3
        } else if self.report.pass() {
            0
        } else {
            1
        }
    }
}

fn distance(traj: &Trajectory, eq: &(Vec<f64>, Vec<f64>)) -> f64 {
    traj.distances_to(&eq.0, &eq.1).last().copied().unwrap_or(f64::NAN)
}

/// Checks followed by simulation of every configured initial condition.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome> {
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("run needs a [simulation] table".into()))?
        .to_sim_config()?;
    let bundle = build_bundle(cfg)?;
    let mut report = check(cfg, &bundle)?;

    let initial = if bundle.source.is_some() {
        source_initial(cfg, &bundle)
    } else {
        initial_conditions(cfg, bundle.system.dims)
    };
    if initial.is_empty() {
        return Err(Error::InvalidConfig("initial: no initial conditions (set states or random)".into()));
    }
    let mut trajectories = simulate_batch(&bundle.system, &initial, &sim)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let lyapunov = match (&bundle.certificate, &bundle.conditions) {
        (Some(cert), Some(cond)) => Some(build_max_lyapunov(cert, &cond.sigma(cert)?)),
        _ => None,
    };
    let theorem_ok = report.entries.iter().filter(|e| e.name.starts_with("theorem1.")).all(|e| e.pass);
    let mut unexpected = None;
    for (k, traj) in trajectories.iter_mut().enumerate() {
        let tag = format!("traj_{k:03}");
        if let Some(v) = &lyapunov {
            traj.attach_lyapunov(|x, z| v.triple(x, z));
            if cfg.checks.decrease && theorem_ok {
                let d = check_decrease_along_trajectory(traj, v, cfg.checks.decrease_level);
                let witness = d.first_violation_time.map(|t| format!("t={t:e}")).unwrap_or_default();
                report.check(format!("decrease.{tag}"), d.pass, d.checked_pairs, -d.worst_increase, witness);
            }
        }
        report.value(format!("{tag}.final_time"), traj.final_time());
        report.value(format!("{tag}.diverged"), traj.diverged);
        if bundle.source.is_none() {
            let dist = distance(traj, &bundle.equilibrium);
            report.value(format!("{tag}.final_distance"), format!("{dist:e}"));
            if cfg.checks.expect_converge && unexpected.is_none() && !(dist <= cfg.checks.converge_tol) {
                unexpected = Some(format!(
                    "{tag} ended at distance {dist:e} from the equilibrium (tolerance {:e}){}",
                    cfg.checks.converge_tol,
                    if traj.diverged { ", diverged" } else { "" }
                ));
            }
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    for (k, traj) in trajectories.iter().enumerate() {
        let name = format!("traj_{k:03}.csv");
        traj.write_csv(out_dir.join(&name))?;
        files.push(name);
    }

    if let Some((scn, coords)) = &bundle.source {
        let traj = &trajectories[0];
        let s = summarize(scn, traj)?;
        report.value("source.final_distance", format!("{:e}", s.final_distance));
        report.value("source.first_entry_time", s.first_entry_time.map_or("none".into(), |t| t.to_string()));
        report.value("source.settled_time", s.settled_time.map_or("none".into(), |t| t.to_string()));
        report.value("source.max_formation_error", format!("{:e}", s.max_formation_error));
        report.check("source.formation_sum", s.max_formation_velocity_sum <= 1e-12, traj.len(), 1e-12 - s.max_formation_velocity_sum, "");
        let bound = 10.0 * s.first_half_formation_error;
        report.check("source.formation_bounded", s.max_formation_error <= bound.max(1e-12), traj.len(), bound - s.max_formation_error, "");
        report.check("source.remains_last_quarter", s.remains_last_quarter, traj.len(), scn.p_epsilon - s.final_distance, "");
        if cfg.checks.expect_converge && !s.remains_last_quarter {
            unexpected = Some(format!(
                "average position is outside the {}-ball during the final quarter (final distance {:e})",
                scn.p_epsilon, s.final_distance
            ));
        }
        let name = "agents.csv".to_string();
        let path = out_dir.join(&name);
        fs::write(&path, agent_csv(scn, traj, *coords)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        files.push(name);
    }

    let write = |name: &str, text: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    };
    write("report.txt", report.to_table())?;
    write("report.kv", report.to_kv())?;
    write("manifest.toml", manifest(cfg))?;
    files.extend(["report.txt", "report.kv", "manifest.toml"].map(String::from));
    Ok(RunOutcome {
        report,
        unexpected_divergence: unexpected,
        files,
    })
}

/// Config echo preceded by toolkit version and seed comments; the file is
/// itself a valid configuration.
pub fn manifest(cfg: &ScenarioConfig) -> String {
    format!(
        "# spfun {}\n# seed {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        cfg.to_toml()
    )
}
