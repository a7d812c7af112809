//! Dispatch of each experiment kind to the numerical pipeline, and the
//! artifacts it emits.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context};
use log::info;
use mvstab_core::model::{make_model, ModelKind, ModelParams, ModelSpec};
use mvstab_core::operators::{
    assemble, default_shapes, eigenfunction_shapes, hautus_check, kernel_hs_norm, kuramoto_gap, schrodinger_check,
    spectrum, AssembleOptions,
};
use mvstab_core::riccati::{solve_are, AreOptions};
use mvstab_core::simulation::{compare_runs, initial_density, simulate, RunComparison};
use mvstab_core::spectral::{default_grid, nodes};
use mvstab_core::stationary::{
    gibbs_map, kuramoto_order_parameter, kuramoto_synchronized, perturbed_density, solve_self_consistent,
    uniform_density, FixedPointOptions,
};
use mvstab_core::{FeedbackLaw, LinearizedSystem, SimulationSetup, StationaryState, TrajectoryRecord};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, ShapeChoice, SweepPoint, Target};
use crate::law::LawFile;
use crate::output::{fmt_f64, Assertion, OutputDir, RunManifest};

/// Contour levels of `log₁₀‖y‖` reported for heatmaps.
pub const CONTOUR_LEVELS: [f64; 4] = [-8.0, -6.0, -4.0, -2.0];
/// Largest tolerated `|∫μ - 1|` along a trajectory.
pub const MASS_TOLERANCE: f64 = 1e-10;
/// Slack on the finite-difference free-energy rate of uncontrolled runs.
pub const ENERGY_SLACK: f64 = 1e-8;
/// Tolerance of the ground-state spectral identity and kernel-norm checks.
pub const SCHRODINGER_TOLERANCE: f64 = 1e-6;

/// State shared by the pieces of one run.
struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a OutputDir,
    assertions: Mutex<Vec<Assertion>>,
}

impl Run<'_> {
    fn check(&self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        let a = Assertion::new(name, pass, detail);
        if !a.pass {
            log::warn!("assertion failed: {} ({})", a.name, a.detail);
        }
        self.assertions.lock().expect("assertion list poisoned").push(a);
    }

    fn modes(&self) -> usize {
        self.cfg.numerics.modes
    }

    fn fixed_point(&self) -> FixedPointOptions {
        FixedPointOptions {
            tol: self.cfg.numerics.fixed_point_tol,
            damping: self.cfg.numerics.damping,
            max_iterations: self.cfg.numerics.max_iterations,
        }
    }

    fn assemble_opts(&self) -> AssembleOptions {
        AssembleOptions {
            delta: self.cfg.control.delta,
            nu: self.cfg.control.nu,
            stationarity_tol: self.cfg.numerics.stationarity_tol,
        }
    }
}

/// Prefixes `file` with a sweep-point directory when there is one.
fn path_in(prefix: &str, file: &str) -> String {
    if prefix.is_empty() {
        file.to_string()
    } else {
        format!("{prefix}/{file}")
    }
}

/// The target actually used, after resolving [`Target::Auto`].
pub fn resolve_target(target: Target, params: &ModelParams) -> Target {
    match (target, params.kind) {
        (Target::Auto, ModelKind::Kuramoto { .. } | ModelKind::VonMises { .. }) => Target::Uniform,
        (Target::Auto, ModelKind::CosinePotential { .. }) => Target::Confinement,
        (Target::Auto, ModelKind::O2 { .. }) => Target::SelfConsistent { eps: 0.0, phase: 0.0 },
        (t, _) => t,
    }
}

/// Computes the stationary state selected by `target`.
pub fn stationary_state(
    target: Target,
    params: &ModelParams,
    m: &ModelSpec,
    opts: &FixedPointOptions,
) -> anyhow::Result<StationaryState> {
    let modes = m.modes();
    let ss = match resolve_target(target, params) {
        Target::Auto => unreachable!("resolved above"),
        Target::Uniform => StationaryState::from_density(m, uniform_density(modes))?,
        Target::Synchronized { phase } => {
            let ModelKind::Kuramoto { coupling } = params.kind else {
                bail!("the synchronized target is defined for the Kuramoto model");
            };
            StationaryState::from_density(m, kuramoto_synchronized(coupling, params.sigma, modes, phase)?)?
        }
        Target::SelfConsistent { eps, phase } => {
            let init = perturbed_density(&uniform_density(modes), eps, phase)?;
            solve_self_consistent(m, &init, opts)?
                .ensure_converged()
                .context("stationary fixed point")?
        }
        Target::Confinement => StationaryState::from_density(m, gibbs_map(m, &uniform_density(modes))?)?,
    };
    Ok(ss)
}

struct Linearization {
    params: ModelParams,
    state: StationaryState,
    sys: LinearizedSystem,
}

fn linearize(run: &Run<'_>, params: ModelParams) -> anyhow::Result<Linearization> {
    let model = make_model(&params, run.modes())?;
    let state = stationary_state(run.cfg.target, &params, &model, &run.fixed_point())?;
    let opts = run.assemble_opts();
    let shapes = match run.cfg.control.shapes {
        ShapeChoice::Ansatz => default_shapes(run.cfg.control.count, run.modes()),
        ShapeChoice::Eigenfunction => eigenfunction_shapes(&model, &state, &opts)?,
    };
    let sys = assemble(&model, &state, &shapes, &opts).context("assembling the linearization")?;
    Ok(Linearization { params, state, sys })
}

fn feedback_law(run: &Run<'_>, lin: &Linearization) -> anyhow::Result<FeedbackLaw> {
    if let Some(path) = &run.cfg.control.law_file {
        let file = LawFile::load(path)?;
        ensure!(
            file.modes == lin.sys.modes && file.controls == lin.sys.controls(),
            "feedback law {} does not match the system ({} modes, {} controls)",
            path.display(),
            lin.sys.modes,
            lin.sys.controls()
        );
        return file.to_law();
    }
    let opts = AreOptions {
        tol: run.cfg.numerics.are_tol,
        ..Default::default()
    };
    solve_are(&lin.sys, &opts).context("solving the Riccati equation")
}

#[derive(Serialize)]
struct StateSummary {
    model: ModelParams,
    modes: usize,
    target: Target,
    residual: f64,
    defect: f64,
    iterations: usize,
    converged: bool,
    branch: mvstab_core::Branch,
    order_parameter: Option<f64>,
    mass: f64,
    min_density: f64,
}

fn state_summary(run: &Run<'_>, params: &ModelParams, ss: &StationaryState) -> anyhow::Result<StateSummary> {
    let grid = run.cfg.numerics.grid.unwrap_or_else(|| default_grid(run.modes()));
    Ok(StateSummary {
        model: *params,
        modes: run.modes(),
        target: resolve_target(run.cfg.target, params),
        residual: ss.residual,
        defect: ss.defect,
        iterations: ss.iterations,
        converged: ss.converged,
        branch: ss.branch,
        order_parameter: match params.kind {
            ModelKind::Kuramoto { coupling } => Some(kuramoto_order_parameter(coupling, params.sigma)),
            _ => None,
        },
        mass: ss.mubar.mass(),
        min_density: ss.mubar.to_grid(grid)?.min(),
    })
}

fn run_stationary(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let model = make_model(&params, run.modes())?;
    let ss = stationary_state(run.cfg.target, &params, &model, &run.fixed_point())?;
    let grid = run.cfg.numerics.grid.unwrap_or_else(|| default_grid(run.modes()));
    let values = ss.mubar.to_grid(grid)?.into_values();
    let rows: Vec<Vec<f64>> = nodes(grid).zip(values).map(|(x, v)| vec![x, v]).collect();
    run.out
        .write_csv(&path_in(prefix, "density.csv"), &["x".into(), "mu".into()], &rows)?;
    run.out
        .write_json(&path_in(prefix, "stationary.json"), &state_summary(run, &params, &ss)?)?;
    run.check(
        path_in(prefix, "stationarity"),
        ss.converged && ss.residual <= run.cfg.numerics.stationarity_tol,
        format!("residual {:e}, converged {}", ss.residual, ss.converged),
    );
    Ok(())
}

fn run_spectrum(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let lin = linearize(run, params)?;
    let rep = spectrum(&lin.sys, true)?;
    let rows: Vec<Vec<f64>> = rep
        .eigenvalues
        .iter()
        .zip(&rep.condition)
        .enumerate()
        .map(|(i, (z, c))| vec![i as f64, z.re, z.im, *c])
        .collect();
    run.out.write_csv(
        &path_in(prefix, "eigenvalues.csv"),
        &["index".into(), "re".into(), "im".into(), "condition".into()],
        &rows,
    )?;
    run.out.write_json(
        &path_in(prefix, "spectrum.json"),
        &json!({
            "model": lin.params,
            "modes": lin.sys.modes,
            "operator": "unshifted linearization",
            "gap": rep.gap,
            "goldstone": rep.goldstone,
            "leading": rep.eigenvalues.iter().take(10).collect::<Vec<_>>(),
            "stationarity_residual": lin.state.residual,
            "warnings": rep.warnings,
        }),
    )?;
    Ok(())
}

fn run_gap_sweep(run: &Run<'_>) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let sigma = run.cfg.model.sigma;
    let rows = run
        .cfg
        .sweep
        .couplings
        .par_iter()
        .map(|&k| kuramoto_gap(k, sigma, run.modes()).with_context(|| format!("gap at K = {k}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.coupling, r.sigma, r.order_parameter, r.gap, r.residual])
        .collect();
    run.out.write_csv(
        "gap.csv",
        &["coupling", "sigma", "order_parameter", "gap", "residual"].map(String::from),
        &table,
    )?;
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    run.check(
        "gap_sweep/stationarity",
        worst <= run.cfg.numerics.stationarity_tol,
        format!("largest residual {worst:e}"),
    );
    Ok(())
}

fn run_schrodinger(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let model = make_model(&params, run.modes())?;
    let ss = stationary_state(run.cfg.target, &params, &model, &run.fixed_point())?;
    let rep = schrodinger_check(&model, &ss)?;
    let doubled = kernel_hs_norm(&model, &ss, 2 * rep.grid)?;
    let rows: Vec<Vec<f64>> = rep
        .h_eigenvalues
        .iter()
        .zip(&rep.galerkin_eigenvalues)
        .enumerate()
        .map(|(i, (h, g))| vec![i as f64, h.re, h.im, g.re, g.im])
        .collect();
    run.out.write_csv(
        &path_in(prefix, "schrodinger_eigenvalues.csv"),
        &["index", "h_re", "h_im", "minus_l_re", "minus_l_im"].map(String::from),
        &rows,
    )?;
    run.out.write_json(
        &path_in(prefix, "schrodinger.json"),
        &json!({
            "model": params,
            "modes": run.modes(),
            "grid": rep.grid,
            "eigen_mismatch": rep.eigen_mismatch,
            "hs_norm": rep.hs_norm,
            "hs_norm_doubled_grid": doubled,
        }),
    )?;
    run.check(
        path_in(prefix, "spectral_identity"),
        rep.eigen_mismatch <= SCHRODINGER_TOLERANCE,
        format!("eigenvalue mismatch {:e}", rep.eigen_mismatch),
    );
    let drift = (doubled - rep.hs_norm).abs();
    run.check(
        path_in(prefix, "hilbert_schmidt_stability"),
        rep.hs_norm.is_finite() && drift <= SCHRODINGER_TOLERANCE,
        format!(
            "|K|_HS = {} (grid {}), drift {drift:e} under doubling",
            rep.hs_norm, rep.grid
        ),
    );
    Ok(())
}

fn run_hautus(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let lin = linearize(run, params)?;
    let rep = hautus_check(&lin.sys)?;
    run.out.write_json(&path_in(prefix, "hautus.json"), &rep)?;
    run.check(
        path_in(prefix, "hautus"),
        rep.pass,
        format!(
            "{} modes with Re >= -delta, smallest margin {:e}",
            rep.unstable_count,
            min_of(&rep.cluster_margins)
        ),
    );
    Ok(())
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn write_law(run: &Run<'_>, lin: &Linearization, law: &FeedbackLaw, prefix: &str) -> anyhow::Result<()> {
    run.out.write_json(
        &path_in(prefix, "feedback_law.json"),
        &LawFile::new(law, lin.params, lin.sys.modes, lin.sys.nu),
    )?;
    let rows: Vec<Vec<f64>> = law.gain.row_iter().map(|r| r.iter().copied().collect()).collect();
    let header: Vec<String> = (1..=law.dim()).map(|i| format!("a_{i}")).collect();
    run.out.write_csv(&path_in(prefix, "gain.csv"), &header, &rows)
}

fn run_synthesize(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let lin = linearize(run, params)?;
    let rep = hautus_check(&lin.sys)?;
    run.check(
        path_in(prefix, "hautus"),
        rep.pass,
        format!("{} modes to stabilize", rep.unstable_count),
    );
    let law = feedback_law(run, &lin)?;
    write_law(run, &lin, &law, prefix)?;
    run.check(
        path_in(prefix, "riccati_residual"),
        law.residual <= run.cfg.numerics.are_tol,
        format!("relative residual {:e}", law.residual),
    );
    run.check(
        path_in(prefix, "closed_loop_stable"),
        law.closed_loop_abscissa < 0.0,
        format!("closed-loop abscissa {}", law.closed_loop_abscissa),
    );
    Ok(())
}

/// Controlled and uncontrolled trajectories of one configuration.
struct Runs {
    controlled: Option<TrajectoryRecord>,
    uncontrolled: Option<TrajectoryRecord>,
}

fn simulate_pair(run: &Run<'_>, lin: &Linearization, prefix: &str) -> anyhow::Result<Runs> {
    let sim = &run.cfg.simulation;
    let mu0 = initial_density(sim.initial, &lin.state.mubar, sim.eps, sim.phase)?;
    let law = if sim.runs.controlled() {
        let law = feedback_law(run, lin)?;
        write_law(run, lin, &law, prefix)?;
        Some(law)
    } else {
        None
    };
    let setup = |law: Option<FeedbackLaw>| -> anyhow::Result<SimulationSetup> {
        Ok(SimulationSetup::new(lin.sys.clone(), law, mu0.clone(), sim.t_end)?
            .with_tolerances(run.cfg.numerics.rtol, run.cfg.numerics.atol)
            .with_samples(sim.samples))
    };
    let controlled_setup = law.map(|l| setup(Some(l))).transpose()?;
    let uncontrolled_setup = if sim.runs.uncontrolled() {
        Some(setup(None)?)
    } else {
        None
    };
    let go = |s: Option<SimulationSetup>, label: &str| -> anyhow::Result<Option<TrajectoryRecord>> {
        s.map(|s| {
            let start = Instant::now();
            let rec = simulate(&s).with_context(|| format!("{label} simulation"))?;
            info!(
                "{prefix} {}: {} in {:.1?}",
                label,
                mvstab_core::simulation::describe(&rec),
                start.elapsed()
            );
            Ok(rec)
        })
        .transpose()
    };
    let (c, u) = rayon::join(
        || go(controlled_setup, "controlled"),
        || go(uncontrolled_setup, "uncontrolled"),
    );
    let runs = Runs {
        controlled: c?,
        uncontrolled: u?,
    };
    for (rec, label) in [(&runs.controlled, "controlled"), (&runs.uncontrolled, "uncontrolled")] {
        if let Some(rec) = rec {
            write_trajectory(run, lin, rec, &path_in(prefix, &format!("trajectory_{label}")))?;
            run.check(
                path_in(prefix, &format!("{label}/mass")),
                rec.max_mass_defect() <= MASS_TOLERANCE,
                format!("largest mass defect {:e}", rec.max_mass_defect()),
            );
            if !rec.controlled {
                run.check(
                    path_in(prefix, "uncontrolled/energy_dissipation"),
                    rec.max_energy_rate <= ENERGY_SLACK,
                    format!("largest dF/dt over accepted steps {:e}", rec.max_energy_rate),
                );
            }
        }
    }
    Ok(runs)
}

fn write_trajectory(run: &Run<'_>, lin: &Linearization, rec: &TrajectoryRecord, stem: &str) -> anyhow::Result<()> {
    let m = lin.sys.controls();
    let mut header: Vec<String> = [
        "t",
        "norm_weighted",
        "norm_l2",
        "free_energy",
        "mass_defect",
        "min_density",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=m).map(|j| format!("u_{j}")));
    let rows: Vec<Vec<f64>> = (0..rec.len())
        .map(|i| {
            let mut r = vec![
                rec.times[i],
                rec.weighted_norms[i],
                rec.l2_norms[i],
                rec.free_energy[i],
                rec.mass_defect[i],
                rec.min_density[i],
            ];
            r.extend(&rec.controls[i]);
            r
        })
        .collect();
    run.out.write_csv(&format!("{stem}.csv"), &header, &rows)?;
    let cfg = run.cfg;
    let sim = &cfg.simulation;
    let implementer_chosen: Vec<&str> = {
        let mut v = vec!["initial condition"];
        if cfg.target == Target::Auto {
            v.push("target");
        }
        if matches!(lin.params.kind, ModelKind::VonMises { .. }) {
            v.push("von Mises theta and sigma grid");
        }
        v
    };
    run.out.write_json(
        &format!("{stem}.json"),
        &json!({
            "controlled": rec.controlled,
            "model": lin.params,
            "modes": lin.sys.modes,
            "target": resolve_target(cfg.target, &lin.params),
            "target_residual": lin.state.residual,
            "delta": lin.sys.delta,
            "nu": lin.sys.nu,
            "shapes": cfg.control.shapes,
            "controls": m,
            "initial": {"shape": sim.initial, "eps": sim.eps, "phase": sim.phase},
            "t_end": sim.t_end,
            "samples": sim.samples,
            "rtol": cfg.numerics.rtol,
            "atol": cfg.numerics.atol,
            "seed": null,
            "accepted_steps": rec.stats.accepted,
            "rejected_steps": rec.stats.rejected,
            "rhs_evaluations": rec.stats.evaluations,
            "max_energy_rate": rec.max_energy_rate,
            "max_mass_defect": rec.max_mass_defect(),
            "positivity_warnings": rec.positivity_warnings,
            "terminal_norm": rec.terminal_norm(),
            "implementer_chosen": implementer_chosen,
        }),
    )
}

fn write_comparison(
    run: &Run<'_>,
    cmp: &RunComparison,
    prefix: &str,
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
) -> anyhow::Result<()> {
    let rows: Vec<Vec<f64>> = (0..cmp.times.len())
        .map(|i| vec![cmp.times[i], a.l2_norms[i], b.l2_norms[i], cmp.ratio[i]])
        .collect();
    run.out.write_csv(
        &path_in(prefix, "comparison.csv"),
        &["t", "norm_a", "norm_b", "ratio"].map(String::from),
        &rows,
    )?;
    run.out.write_json(
        &path_in(prefix, "comparison.json"),
        &json!({
            "terminal_norms": [cmp.terminal.0, cmp.terminal.1],
            "fitted_rates": [cmp.rates.0, cmp.rates.1],
            "window": [cmp.window.0, cmp.window.1],
        }),
    )
}

fn run_simulate(run: &Run<'_>, params: ModelParams, prefix: &str) -> anyhow::Result<()> {
    let lin = linearize(run, params)?;
    let runs = simulate_pair(run, &lin, prefix)?;
    if let (Some(c), Some(u)) = (&runs.controlled, &runs.uncontrolled) {
        // the rates are informational, so an empty fitting window is not fatal
        match compare_runs(c, u) {
            Ok(cmp) => write_comparison(run, &cmp, prefix, c, u)?,
            Err(e) => log::warn!("{prefix}: no comparison ({e})"),
        }
    }
    Ok(())
}

/// First time at which `log₁₀‖y‖` reaches `level`, linearly interpolated.
pub fn first_crossing(times: &[f64], log_norms: &[f64], level: f64) -> Option<f64> {
    if log_norms.first().is_some_and(|&v| v <= level) {
        return times.first().copied();
    }
    times.windows(2).zip(log_norms.windows(2)).find_map(|(t, v)| {
        (v[1] <= level && v[0] > level).then(|| t[0] + (t[1] - t[0]) * (v[0] - level) / (v[0] - v[1]))
    })
}

fn log_norms(rec: &TrajectoryRecord) -> Vec<f64> {
    rec.l2_norms.iter().map(|n| n.max(f64::MIN_POSITIVE).log10()).collect()
}

fn run_heatmap(run: &Run<'_>) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let points = run.cfg.sweep.points();
    let results = points
        .par_iter()
        .map(|p| -> anyhow::Result<(SweepPoint, Runs)> {
            let params = p.apply(&run.cfg.model)?;
            let prefix = format!("points/{}", p.label());
            let lin = linearize(run, params).with_context(|| format!("sweep point {}", p.label()))?;
            let runs = simulate_pair(run, &lin, &prefix).with_context(|| format!("sweep point {}", p.label()))?;
            Ok((*p, runs))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut contours: Vec<Vec<String>> = Vec::new();
    for label in ["controlled", "uncontrolled"] {
        let pick = |r: &Runs| {
            if label == "controlled" {
                r.controlled.clone()
            } else {
                r.uncontrolled.clone()
            }
        };
        let Some(first) = results.first().and_then(|(_, r)| pick(r)) else {
            continue;
        };
        let mut header: Vec<String> = vec!["coupling".into(), "sigma".into()];
        header.extend(first.times.iter().map(|&t| fmt_f64(t)));
        let mut rows = Vec::new();
        for (p, r) in &results {
            let rec = pick(r).expect("every point runs the same variants");
            let params = p.apply(&run.cfg.model)?;
            let coupling = coupling_of(&params);
            let logs = log_norms(&rec);
            let mut row = vec![coupling, params.sigma];
            row.extend(&logs);
            rows.push(row);
            for level in CONTOUR_LEVELS {
                contours.push(vec![
                    label.into(),
                    fmt_f64(coupling),
                    fmt_f64(params.sigma),
                    fmt_f64(level),
                    first_crossing(&rec.times, &logs, level)
                        .map(fmt_f64)
                        .unwrap_or_default(),
                ]);
            }
        }
        run.out.write_csv(&format!("heatmap_{label}.csv"), &header, &rows)?;
    }
    run.out.write_csv_text(
        "heatmap_contours.csv",
        &["run", "coupling", "sigma", "level", "t_first"].map(String::from),
        &contours,
    )?;
    info!(
        "heatmap over {} points, t_end = {}",
        results.len(),
        run.cfg.simulation.t_end
    );
    Ok(())
}

/// Interaction strength of a model (`θ` for von Mises).
fn coupling_of(p: &ModelParams) -> f64 {
    match p.kind {
        ModelKind::Kuramoto { coupling }
        | ModelKind::CosinePotential { coupling, .. }
        | ModelKind::O2 { coupling, .. } => coupling,
        ModelKind::VonMises { theta } => theta,
    }
}

fn run_points(run: &Run<'_>, kind: ExperimentKind) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let single = run.cfg.sweep.is_empty();
    run.cfg.sweep.points().par_iter().try_for_each(|p| {
        let params = p.apply(&run.cfg.model)?;
        let prefix = if single { String::new() } else { p.label() };
        let res = match kind {
            ExperimentKind::Stationary => run_stationary(run, params, &prefix),
            ExperimentKind::Spectrum => run_spectrum(run, params, &prefix),
            ExperimentKind::SchrodingerCheck => run_schrodinger(run, params, &prefix),
            ExperimentKind::Hautus => run_hautus(run, params, &prefix),
            ExperimentKind::Synthesize => run_synthesize(run, params, &prefix),
            ExperimentKind::Simulate => run_simulate(run, params, &prefix),
            ExperimentKind::GapSweep | ExperimentKind::HeatmapSweep => unreachable!("aggregating kinds"),
        };
        if single {
            res
        } else {
            res.with_context(|| format!("sweep point {}", p.label()))
        }
    })
}

/// Runs one experiment, writes its artifacts and `manifest.json` into
/// `out_dir`, and returns the manifest.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> anyhow::Result<RunManifest> {
    cfg.validate()?;
    let kind = cfg.kind.expect("validated");
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let threads = threads
        .or(cfg.threads)
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building the worker pool")?;
    let out = OutputDir::create(out_dir)?;
    let state = Run {
        cfg,
        out: &out,
        assertions: Mutex::new(Vec::new()),
    };
    info!("running {kind} with {threads} threads into {}", out_dir.display());
    pool.install(|| match kind {
        ExperimentKind::GapSweep => run_gap_sweep(&state),
        ExperimentKind::HeatmapSweep => run_heatmap(&state),
        other => run_points(&state, other),
    })
    .with_context(|| format!("{kind} experiment"))?;

    let mut assertions = state.assertions.into_inner().expect("assertion list poisoned");
    assertions.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = RunManifest {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: kind.label().into(),
        config: serde_json::to_value(cfg)?,
        threads,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: out.checksums()?,
        pass: assertions.iter().all(|a| a.pass),
        assertions,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Reads the `t` and `norm_l2` columns of a trajectory CSV.
pub fn read_trajectory(path: &Path) -> anyhow::Result<TrajectoryRecord> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no `{name}` column", path.display()))
    };
    let (ti, ni) = (col("t")?, col("norm_l2")?);
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        weighted_norms: Vec::new(),
        l2_norms: Vec::new(),
        free_energy: Vec::new(),
        mass_defect: Vec::new(),
        min_density: Vec::new(),
        stats: Default::default(),
        max_energy_rate: f64::NAN,
        positivity_warnings: Vec::new(),
        controlled: false,
        noise_floor: 0.0,
    };
    for (line, r) in rdr.records().enumerate() {
        let r = r?;
        let num = |i: usize| -> anyhow::Result<f64> {
            r[i].parse()
                .with_context(|| format!("{}: bad number `{}` on data row {}", path.display(), &r[i], line + 1))
        };
        rec.times.push(num(ti)?);
        rec.l2_norms.push(num(ni)?);
    }
    // the sidecar, when present, tells where the samples turn into integration noise
    let sidecar = std::fs::read_to_string(path.with_extension("json")).ok();
    if let Some(atol) = sidecar
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("atol").and_then(Value::as_f64))
    {
        rec.noise_floor = 100.0 * atol;
    }
    Ok(rec)
}

/// Compares two trajectory CSVs and writes `comparison.csv/json` plus a manifest.
pub fn compare_files(a: &Path, b: &Path, out_dir: &Path, window: Option<(f64, f64)>) -> anyhow::Result<RunManifest> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let ta = read_trajectory(a)?;
    let tb = read_trajectory(b)?;
    let cmp = match window {
        Some((s, e)) => mvstab_core::simulation::compare_runs_in(&ta, &tb, s, e)?,
        None => compare_runs(&ta, &tb)?,
    };
    let out = OutputDir::create(out_dir)?;
    let dummy = ExperimentConfig {
        kind: None,
        model: ModelParams::kuramoto(1.0, 1.0),
        numerics: Default::default(),
        control: Default::default(),
        target: Default::default(),
        simulation: Default::default(),
        sweep: Default::default(),
        output: None,
        threads: None,
        notes: Vec::new(),
    };
    let state = Run {
        cfg: &dummy,
        out: &out,
        assertions: Mutex::new(Vec::new()),
    };
    write_comparison(&state, &cmp, "", &ta, &tb)?;
    let manifest = RunManifest {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: "compare".into(),
        config: json!({"a": a, "b": b, "window": window}),
        threads: 1,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: out.checksums()?,
        assertions: Vec::new(),
        pass: true,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossings_interpolate() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [-1.0, -3.0, -5.0, -7.0];
        assert_eq!(first_crossing(&t, &v, -2.0), Some(0.5));
        assert_eq!(first_crossing(&t, &v, -6.0), Some(2.5));
        assert_eq!(first_crossing(&t, &v, -8.0), None);
        assert_eq!(first_crossing(&t, &v, 0.0), Some(0.0));
    }

    #[test]
    fn auto_targets() {
        assert_eq!(
            resolve_target(Target::Auto, &ModelParams::kuramoto(5.0, 0.5)),
            Target::Uniform
        );
        assert_eq!(
            resolve_target(Target::Auto, &ModelParams::cosine_potential(1.0, 0.05, 0.5)),
            Target::Confinement
        );
        let sync = Target::Synchronized { phase: 1.0 };
        assert_eq!(resolve_target(sync, &ModelParams::o2(1.0, 0.05, 0.5)), sync);
    }

    #[test]
    fn confinement_target_is_stationary() {
        let p = ModelParams::cosine_potential(1.0, 0.05, 0.4);
        let m = make_model(&p, 16).unwrap();
        let ss = stationary_state(Target::Auto, &p, &m, &FixedPointOptions::default()).unwrap();
        assert!(ss.residual < 1e-12, "{}", ss.residual);
        // exp(-V/σ) with V = 0.05 cos 2x has no odd modes
        assert!(ss.mubar.coeff(1).norm() < 1e-15);
        assert!(stationary_state(
            Target::Synchronized { phase: 0.0 },
            &p,
            &m,
            &FixedPointOptions::default()
        )
        .is_err());
    }
}
