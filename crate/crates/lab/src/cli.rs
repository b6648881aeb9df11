//! The `homlab` command line.
//!
//! Exit status: 0 on success, 1 when a check or study verdict fails, 2 on
//! usage errors and on rejected inputs.

use crate::config::{load_scenario, parse_rational, parse_rational_list, reciprocal, scenario_to_toml, to_f64};
use crate::output::{self, fmt, Manifest, Timing};
use crate::parallel::RayonExecutor;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use homlab_core::cell::{
    check_effective_properties, effective_hamiltonian, effective_linear_coeffs, CellProblemInstance, DEFAULT_SCHEDULE,
};
use homlab_core::estimates::{cde_rhs_control, cde_rhs_general, holder_bound, linfty_bound, BoundReport};
use homlab_core::exec::{Executor, Sequential};
use homlab_core::experiments::{
    continuous_dependence_sweep, homogenization_study, perturb, vanishing_viscosity_study, EffectiveOptions, EffectivePath,
    ExperimentReport, HomogenizationOptions, PerturbationKind,
};
use homlab_core::grid::{GridFunction, SpaceGrid};
use homlab_core::operator::{cfl_timestep, DiscreteOperatorConfig, FastScale};
use homlab_core::scenario::{
    build_catalog_scenario, catalog_names, verify_declared_constants, verify_ellipticity, verify_quasi_monotonicity, Form,
    SystemSpec,
};
use homlab_core::solver::{check_barrier, check_comparison, solve_parabolic_with, SolveOptions, Trajectory};
use num_rational::Ratio;
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "homlab", version, about = "Numerical lab for weakly coupled min-max parabolic systems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every sampled supremum and subsampled seminorm.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, env = "HOMLAB_OUT", default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario and export the stored slices.
    Solve(SolveArgs),
    /// Vanishing viscosity study.
    Vanish(VanishArgs),
    /// Continuous dependence sweep and estimate reports.
    Cde(CdeArgs),
    /// Discounted cell problems and the effective Hamiltonian at one instance.
    Cell(CellArgs),
    /// Invariant measure and effective coefficients at one slow point.
    Measure(MeasureArgs),
    /// Periodic homogenization study.
    Homogenize(HomogenizeArgs),
    /// Property suites.
    Check(CheckArgs),
    /// List catalog scenarios.
    List(ListArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Catalog key or scenario file.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 128)]
    nx: usize,
    #[arg(long, default_value = "0.1")]
    t_final: String,
    #[arg(long, default_value = "0")]
    eps_visc: String,
    /// Fast scale `1/k` for oscillating scenarios.
    #[arg(long)]
    eps_fast: Option<String>,
    /// Explicit time step; refused above the CFL limit.
    #[arg(long)]
    dt: Option<String>,
}

#[derive(Args, Debug)]
struct VanishArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "0.1,0.05,0.025,0.0125")]
    eps: String,
    #[arg(long, default_value_t = 256)]
    nx: usize,
    #[arg(long, default_value = "0.1")]
    t_final: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    L,
    B,
    A,
    D,
}

#[derive(Args, Debug)]
struct CdeArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum, default_value = "l")]
    kind: KindArg,
    #[arg(long, default_value = "0.1,0.05,0.025")]
    delta: String,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value = "0.2")]
    t_final: String,
    #[arg(long, default_value = "10")]
    alpha: String,
    #[arg(long, default_value = "1")]
    gamma_bar: String,
    /// Samples of the general estimate's supremum.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct CellArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    component: usize,
    /// Slow point, one entry per dimension.
    #[arg(long, default_value = "0")]
    x: String,
    /// Values `r`, one per component.
    #[arg(long)]
    r: Option<String>,
    /// Gradient, one entry per dimension.
    #[arg(long, default_value = "0")]
    p: String,
    /// Diagonal of the Hessian argument, one entry per dimension.
    #[arg(long, default_value = "1")]
    xx: String,
    #[arg(long)]
    ncell: Option<usize>,
    #[arg(long, default_value = "0.1,0.05,0.025")]
    lambda: String,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct MeasureArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    component: usize,
    #[arg(long, default_value = "0")]
    x: String,
    #[arg(long)]
    ncell: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Auto,
    Measure,
    Corrector,
}

#[derive(Args, Debug)]
struct HomogenizeArgs {
    #[arg(long)]
    scenario: String,
    /// Fast scales, each the reciprocal of an integer.
    #[arg(long, default_value = "1/4,1/8,1/16,1/32")]
    eps: String,
    /// Nodes per axis; defaults to 16 over the smallest scale.
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long, default_value = "0.1")]
    t_final: String,
    /// Nodes per axis of the effective problem.
    #[arg(long)]
    effective_nx: Option<usize>,
    #[arg(long)]
    ncell: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    path: PathArg,
    #[arg(long, default_value_t = 1 << 20)]
    cache_cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Scenarios,
    Comparison,
    Bounds,
    Effective,
    Invariants,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, value_enum, default_value = "invariants")]
    suite: Suite,
    /// Samples per sampled property.
    #[arg(long, default_value_t = 1000)]
    budget: usize,
}

#[derive(Args, Debug)]
struct ListArgs {
    /// Write every catalog scenario as a TOML file into this directory.
    #[arg(long, hide = true)]
    export: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started = Instant::now();
    let outcome = if cli.common.threads <= 1 {
        dispatch(&cli, &Sequential)
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &RayonExecutor)),
            Err(e) => Err(anyhow!("cannot start {} threads: {e}", cli.common.threads)),
        }
    };
    match outcome {
        Ok(passed) => {
            if !matches!(cli.command, Command::List(_)) {
                let timing = Timing { command: command_name(&cli.command).to_string(), threads: cli.common.threads.max(1), wall_time_s: started.elapsed().as_secs_f64() };
                if let Err(e) = output::write_json(&cli.common.out.join("timing.json"), &timing) {
                    eprintln!("error: cannot write timing.json: {e}");
                    return 2;
                }
            }
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Solve(_) => "solve",
        Command::Vanish(_) => "vanish",
        Command::Cde(_) => "cde",
        Command::Cell(_) => "cell",
        Command::Measure(_) => "measure",
        Command::Homogenize(_) => "homogenize",
        Command::Check(_) => "check",
        Command::List(_) => "list",
    }
}

/// Runs a command; `Ok(false)` reports a failed verdict.
fn dispatch<E: Executor>(cli: &Cli, exec: &E) -> Result<bool> {
    let c = &cli.common;
    if !matches!(cli.command, Command::List(_)) {
        std::fs::create_dir_all(&c.out).with_context(|| format!("cannot create {}", c.out.display()))?;
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, c, exec),
        Command::Vanish(a) => cmd_vanish(a, c, exec),
        Command::Cde(a) => cmd_cde(a, c, exec),
        Command::Cell(a) => cmd_cell(a, c),
        Command::Measure(a) => cmd_measure(a, c),
        Command::Homogenize(a) => cmd_homogenize(a, c, exec),
        Command::Check(a) => cmd_check(a, c),
        Command::List(a) => cmd_list(a),
    }
}

fn number(s: &str) -> Result<f64> {
    Ok(to_f64(parse_rational(s)?))
}

fn numbers(s: &str) -> Result<Vec<f64>> {
    Ok(parse_rational_list(s)?.into_iter().map(to_f64).collect())
}

fn point(s: &str, dim: usize, what: &str) -> Result<[f64; 2]> {
    let v = numbers(s)?;
    let v = if v.len() == 1 && dim == 2 { vec![v[0], v[0]] } else { v };
    if v.len() != dim {
        bail!("--{what} needs {dim} entries, got {}", v.len());
    }
    Ok([v[0], if dim == 2 { v[1] } else { 0.0 }])
}

fn fast_scale(spec: &SystemSpec, eps: Option<&str>, n: usize) -> Result<Option<FastScale>> {
    match (spec.fast, eps) {
        (false, None) => Ok(None),
        (false, Some(_)) => bail!("scenario {} has no fast variable; drop --eps-fast", spec.name),
        (true, None) => bail!("scenario {} oscillates; pass --eps-fast 1/k with k dividing {n}", spec.name),
        (true, Some(e)) => Ok(Some(FastScale::new(reciprocal(parse_rational(e)?)?))),
    }
}

fn manifest(command: &str, spec: &SystemSpec, c: &Common) -> Manifest {
    Manifest { command: command.to_string(), scenario: spec.name.clone(), dim: spec.dim, seed: c.seed, ..Manifest::default() }
}

fn finish(dir: &Path, mut m: Manifest, files: Vec<String>) -> Result<()> {
    m.files = files;
    output::write_json(&dir.join("manifest.json"), &m)?;
    Ok(())
}

fn export_trajectory(dir: &Path, tr: &Trajectory) -> Result<Vec<String>> {
    let mut files = Vec::with_capacity(tr.snapshots.len());
    for (k, s) in tr.snapshots.iter().enumerate() {
        let name = format!("u_{k:04}.csv");
        output::write_grid_csv(&dir.join(&name), s)?;
        files.push(name);
    }
    Ok(files)
}

fn cmd_solve<E: Executor>(a: &SolveArgs, c: &Common, exec: &E) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let grid = SpaceGrid::new(spec.dim, a.nx)?;
    let t_final = number(&a.t_final)?;
    let config = DiscreteOperatorConfig::with_viscosity(number(&a.eps_visc)?);
    let fast = fast_scale(&spec, a.eps_fast.as_deref(), a.nx)?;
    let dt = a.dt.as_deref().map(number).transpose()?;
    let opts = SolveOptions { config, fast, dt, u0: None };
    let tr = solve_parabolic_with(&spec, grid, t_final, &opts, exec)?;
    let mut files = export_trajectory(&c.out, &tr)?;
    let mut bounds = vec![linfty_bound(&tr, &spec, t_final)?];
    if !spec.fast {
        bounds.push(holder_bound(&tr, &spec, t_final, c.seed)?);
    }
    output::write_bound_reports(&c.out.join("bounds.csv"), &bounds)?;
    files.push("bounds.csv".to_string());
    let mut m = manifest("solve", &spec, c);
    m.n = Some(a.nx);
    m.dt = Some(tr.time.dt);
    m.t_final = Some(t_final);
    m.eps_visc = Some(config.eps_visc);
    m.eps_fast = a.eps_fast.clone();
    m.results.insert("steps".into(), json!(tr.time.steps));
    m.results.insert("sup_norm_T".into(), json!(fmt(tr.last().sup_norm())));
    finish(&c.out, m, files)?;
    Ok(bounds.iter().all(|b| b.pass))
}

fn study_manifest(command: &str, spec: &SystemSpec, c: &Common, rep: &ExperimentReport, n: usize, t_final: f64) -> Manifest {
    let mut m = manifest(command, spec, c);
    m.n = Some(n);
    m.t_final = Some(t_final);
    m.results.insert("pass".into(), json!(rep.pass));
    if let Some(f) = rep.fit {
        m.results.insert("fitted_exponent".into(), json!(fmt(f.exponent)));
        m.results.insert("prefactor".into(), json!(fmt(f.prefactor)));
        m.results.insert("residual".into(), json!(fmt(f.residual)));
    }
    if let Some(e) = rep.expected_exponent {
        m.results.insert("expected_exponent".into(), json!(fmt(e)));
    }
    m
}

fn cmd_vanish<E: Executor>(a: &VanishArgs, c: &Common, exec: &E) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let grid = SpaceGrid::new(spec.dim, a.nx)?;
    let t_final = number(&a.t_final)?;
    let rep = vanishing_viscosity_study(&spec, &numbers(&a.eps)?, grid, t_final, exec)?;
    output::write_experiment_report(&c.out.join("report.csv"), &rep)?;
    let m = study_manifest("vanish", &spec, c, &rep, a.nx, t_final);
    finish(&c.out, m, vec!["report.csv".into()])?;
    Ok(rep.pass)
}

fn cmd_cde<E: Executor>(a: &CdeArgs, c: &Common, exec: &E) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let grid = SpaceGrid::new(spec.dim, a.nx)?;
    let t_final = number(&a.t_final)?;
    let kind = match a.kind {
        KindArg::L => PerturbationKind::L,
        KindArg::B => PerturbationKind::B,
        KindArg::A => PerturbationKind::A,
        KindArg::D => PerturbationKind::D,
    };
    let deltas = numbers(&a.delta)?;
    let rep = continuous_dependence_sweep(&spec, kind, &deltas, grid, t_final, exec)?;
    output::write_experiment_report(&c.out.join("report.csv"), &rep)?;

    // estimate reports for every positive delta, on a common time step
    let config = DiscreteOperatorConfig::default();
    let specs: Vec<SystemSpec> = deltas.iter().filter(|d| **d > 0.0).map(|&d| perturb(&spec, kind, d)).collect();
    let dt = specs.iter().map(|s| cfl_timestep(s, grid.h(), &config)).fold(cfl_timestep(&spec, grid.h(), &config), f64::min);
    let opts = SolveOptions { config, dt: Some(dt), ..SolveOptions::default() };
    let base = solve_parabolic_with(&spec, grid, t_final, &opts, exec)?;
    let alpha = number(&a.alpha)?;
    let gamma_bar = number(&a.gamma_bar)?;
    let mut bounds: Vec<BoundReport> = Vec::new();
    for s in &specs {
        let other = solve_parabolic_with(s, grid, t_final, &opts, exec)?;
        if spec.form == Form::Control {
            bounds.push(cde_rhs_control(&spec, s, &base, &other, t_final, spec.mu)?);
        }
        bounds.push(cde_rhs_general(&spec, s, &base, &other, alpha, gamma_bar, t_final, a.budget, c.seed)?);
    }
    output::write_bound_reports(&c.out.join("bounds.csv"), &bounds)?;
    let m = study_manifest("cde", &spec, c, &rep, a.nx, t_final);
    finish(&c.out, m, vec!["report.csv".into(), "bounds.csv".into()])?;
    Ok(rep.pass && bounds.iter().all(|b| b.pass))
}

fn default_cell(dim: usize, ncell: Option<usize>) -> Result<SpaceGrid> {
    Ok(SpaceGrid::new(dim, ncell.unwrap_or(if dim == 1 { 128 } else { 64 }))?)
}

fn cmd_cell(a: &CellArgs, c: &Common) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let dim = spec.dim;
    let cell = default_cell(dim, a.ncell)?;
    let x = point(&a.x, dim, "x")?;
    let p = point(&a.p, dim, "p")?;
    let xx = point(&a.xx, dim, "xx")?;
    let r = match &a.r {
        Some(s) => numbers(s)?,
        None => vec![0.0; spec.m],
    };
    let schedule = numbers(&a.lambda)?;
    let inst = CellProblemInstance::new(a.component, x, r, p, [[xx[0], 0.0], [0.0, xx[1]]]);
    let sol = effective_hamiltonian(&spec, &inst, &schedule, cell)?;
    output::write_grid_csv(&c.out.join("corrector.csv"), &sol.corrector)?;
    let rows: Vec<Vec<String>> = sol
        .levels
        .iter()
        .map(|l| vec![fmt(l.lambda), fmt(l.ergodic_estimate()), fmt(l.spread()), fmt(l.residual), l.newton_iterations.to_string()])
        .collect();
    output::write_table(&c.out.join("levels.csv"), &["lambda", "ergodic_estimate", "spread", "residual", "newton_iterations"], &rows)?;
    let mut m = manifest("cell", &spec, c);
    m.n = Some(cell.n());
    m.results.insert("h_bar".into(), json!(fmt(sol.h_bar)));
    m.results.insert("component".into(), json!(a.component));
    finish(&c.out, m, vec!["corrector.csv".into(), "levels.csv".into()])?;
    Ok(true)
}

fn cmd_measure(a: &MeasureArgs, c: &Common) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let dim = spec.dim;
    let cell = default_cell(dim, a.ncell)?;
    let x = point(&a.x, dim, "x")?;
    if a.component >= spec.m {
        bail!("component {} out of range (m = {})", a.component, spec.m);
    }
    let eff = effective_linear_coeffs(&spec, &x, cell)?;
    let comp = &eff.components[a.component];
    let density = GridFunction::from_values(cell, 0.0, vec![comp.measure.density.clone()])?;
    output::write_grid_csv(&c.out.join("measure.csv"), &density)?;

    let mut header: Vec<String> = vec!["x1".into()];
    if dim == 2 {
        header.push("x2".into());
    }
    for r in 0..dim {
        for k in 0..dim {
            header.push(format!("abar_{}{}", r + 1, k + 1));
        }
    }
    for k in 0..dim {
        header.push(format!("p{}", k + 1));
    }
    header.push("fbar".into());
    let probes: Vec<[f64; 2]> = if dim == 1 {
        [-1.0, 0.0, 1.0].iter().map(|&v| [v, 0.0]).collect()
    } else {
        let vals = [-1.0, 0.0, 1.0];
        vals.iter().flat_map(|&u| vals.iter().map(move |&v| [u, v])).collect()
    };
    let r = vec![0.0; spec.m];
    let rows: Vec<Vec<String>> = probes
        .iter()
        .map(|p| {
            let mut row = vec![fmt(x[0])];
            if dim == 2 {
                row.push(fmt(x[1]));
            }
            for i in 0..dim {
                for k in 0..dim {
                    row.push(fmt(comp.abar[i][k]));
                }
            }
            for v in p.iter().take(dim) {
                row.push(fmt(*v));
            }
            row.push(fmt(comp.fbar(dim, &r, p)));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    output::write_table(&c.out.join("effective.csv"), &header_ref, &rows)?;
    let mut m = manifest("measure", &spec, c);
    m.n = Some(cell.n());
    m.results.insert("iterations".into(), json!(comp.measure.iterations));
    m.results.insert("last_change".into(), json!(fmt(comp.measure.last_change)));
    finish(&c.out, m, vec!["measure.csv".into(), "effective.csv".into()])?;
    Ok(true)
}

fn cmd_homogenize<E: Executor>(a: &HomogenizeArgs, c: &Common, exec: &E) -> Result<bool> {
    let spec = load_scenario(&a.scenario)?;
    let scales: Vec<FastScale> =
        parse_rational_list(&a.eps)?.into_iter().map(|r: Ratio<i64>| reciprocal(r).map(FastScale::new)).collect::<Result<_, _>>()?;
    let k_max = scales.iter().map(FastScale::k).max().ok_or_else(|| anyhow!("--eps is empty"))?;
    let n = a.nx.unwrap_or(16 * k_max);
    let grid = SpaceGrid::new(spec.dim, n)?;
    let t_final = number(&a.t_final)?;
    let path = match a.path {
        PathArg::Auto => EffectivePath::Auto,
        PathArg::Measure => EffectivePath::Measure,
        PathArg::Corrector => EffectivePath::Corrector,
    };
    let cell_grid = a.ncell.map(|k| SpaceGrid::new(spec.dim, k)).transpose()?;
    let effective_grid = a.effective_nx.map(|k| SpaceGrid::new(spec.dim, k)).transpose()?;
    let opts = HomogenizationOptions {
        effective: EffectiveOptions { path, cell_grid, cache_cap: a.cache_cap, ..EffectiveOptions::default() },
        effective_grid,
    };
    let rep = homogenization_study(&spec, &scales, grid, t_final, &opts, exec)?;
    output::write_experiment_report(&c.out.join("report.csv"), &rep)?;
    let mut m = study_manifest("homogenize", &spec, c, &rep, n, t_final);
    m.eps_fast = Some(a.eps.clone());
    finish(&c.out, m, vec!["report.csv".into()])?;
    Ok(rep.pass)
}

struct CheckRow {
    suite: &'static str,
    scenario: String,
    check: String,
    value: f64,
    pass: bool,
}

fn check_grid(spec: &SystemSpec) -> Result<(SpaceGrid, Option<FastScale>)> {
    let n = if spec.dim == 1 { 64 } else { 16 };
    Ok((SpaceGrid::new(spec.dim, n)?, spec.fast.then(|| FastScale::new(4))))
}

fn suite_scenarios(budget: usize, seed: u64, rows: &mut Vec<CheckRow>) -> Result<()> {
    for name in catalog_names() {
        let spec = build_catalog_scenario(name)?;
        let q = verify_quasi_monotonicity(&spec, budget, seed);
        rows.push(CheckRow { suite: "scenarios", scenario: spec.name.clone(), check: "quasi_monotone_gamma".into(), value: q.estimated_gamma, pass: q.pass });
        let e = verify_ellipticity(&spec, budget, seed);
        rows.push(CheckRow { suite: "scenarios", scenario: spec.name.clone(), check: "ellipticity_nu".into(), value: e.estimated_nu, pass: e.pass });
        let k = verify_declared_constants(&spec, budget, seed);
        rows.push(CheckRow { suite: "scenarios", scenario: spec.name.clone(), check: "declared_c_f".into(), value: k.sampled_c_f, pass: k.pass });
    }
    Ok(())
}

fn suite_comparison(rows: &mut Vec<CheckRow>) -> Result<()> {
    for name in catalog_names() {
        let spec = build_catalog_scenario(name)?;
        let (grid, fast) = check_grid(&spec)?;
        let high = GridFunction::sample_fields(grid, &spec.u0, 0.0);
        let dip: Vec<f64> = (0..grid.len()).map(|k| 0.2 + 0.1 * (std::f64::consts::TAU * grid.coords(k)[0]).sin()).collect();
        let lowered = high.components().iter().map(|c| c.iter().zip(&dip).map(|(v, d)| v - d).collect()).collect();
        let low = GridFunction::from_values(grid, 0.0, lowered)?;
        let opts = SolveOptions { fast, ..SolveOptions::default() };
        let rep = check_comparison(&spec, &low, &high, 0.1, &opts)?;
        rows.push(CheckRow { suite: "comparison", scenario: spec.name.clone(), check: "ordering_violation".into(), value: rep.max_violation.max(0.0), pass: rep.pass });
        let tr = solve_parabolic_with(&spec, grid, 0.1, &opts, &Sequential)?;
        let b = check_barrier(&spec, &tr);
        rows.push(CheckRow { suite: "comparison", scenario: spec.name.clone(), check: "barrier_violation".into(), value: b.max_violation, pass: b.pass });
    }
    Ok(())
}

fn suite_bounds(seed: u64, rows: &mut Vec<CheckRow>) -> Result<()> {
    for name in catalog_names() {
        let spec = build_catalog_scenario(name)?;
        let (grid, fast) = check_grid(&spec)?;
        let opts = SolveOptions { fast, ..SolveOptions::default() };
        let tr = solve_parabolic_with(&spec, grid, 0.1, &opts, &Sequential)?;
        let l = linfty_bound(&tr, &spec, 0.1)?;
        rows.push(CheckRow { suite: "bounds", scenario: spec.name.clone(), check: "linfty_margin".into(), value: l.margin(), pass: l.pass });
        if !spec.fast {
            let h = holder_bound(&tr, &spec, 0.1, seed)?;
            rows.push(CheckRow { suite: "bounds", scenario: spec.name.clone(), check: "holder_fitted_k".into(), value: h.fitted_k.unwrap_or(f64::NAN), pass: h.pass });
        }
    }
    Ok(())
}

fn suite_effective(budget: usize, seed: u64, rows: &mut Vec<CheckRow>) -> Result<()> {
    for name in catalog_names() {
        let spec = build_catalog_scenario(name)?;
        if !spec.fast {
            continue;
        }
        let cell = SpaceGrid::new(spec.dim, if spec.dim == 1 { 64 } else { 16 })?;
        let rep = check_effective_properties(&spec, budget, seed, cell, &DEFAULT_SCHEDULE)?;
        let violations = rep.lipschitz_violations + rep.ellipticity_violations + rep.quasi_monotone_violations + rep.convexity_violations.unwrap_or(0);
        rows.push(CheckRow { suite: "effective", scenario: spec.name.clone(), check: "property_violations".into(), value: violations as f64, pass: rep.pass });
        rows.push(CheckRow { suite: "effective", scenario: spec.name.clone(), check: "nu_bar".into(), value: rep.nu_bar, pass: rep.nu_bar >= spec.constants.nu - 1e-9 });
        if (0..spec.m).all(|i| spec.diffusion_is_control_free(i)) {
            let eff = effective_linear_coeffs(&spec, &[0.0; 2], cell)?;
            let inst = CellProblemInstance::new(0, [0.0; 2], vec![0.0; spec.m], [0.5, -0.25], [[-1.0, 0.0], [0.0, 0.5]]);
            let lam = effective_hamiltonian(&spec, &inst, &DEFAULT_SCHEDULE, cell)?.h_bar;
            let gap = (lam - eff.components[0].hbar(spec.dim, &inst.r, &inst.p, &inst.xmat)).abs();
            rows.push(CheckRow { suite: "effective", scenario: spec.name.clone(), check: "cross_path_gap".into(), value: gap, pass: gap <= 1e-3 });
        }
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs, c: &Common) -> Result<bool> {
    let mut rows = Vec::new();
    let all = a.suite == Suite::Invariants;
    if all || a.suite == Suite::Scenarios {
        suite_scenarios(a.budget, c.seed, &mut rows)?;
    }
    if all || a.suite == Suite::Comparison {
        suite_comparison(&mut rows)?;
    }
    if all || a.suite == Suite::Bounds {
        suite_bounds(c.seed, &mut rows)?;
    }
    if all || a.suite == Suite::Effective {
        suite_effective(a.budget, c.seed, &mut rows)?;
    }
    let table: Vec<Vec<String>> =
        rows.iter().map(|r| vec![r.suite.to_string(), r.scenario.clone(), r.check.clone(), fmt(r.value), r.pass.to_string()]).collect();
    output::write_table(&c.out.join("checks.csv"), &["suite", "scenario", "check", "value", "pass"], &table)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    for r in rows.iter().filter(|r| !r.pass) {
        eprintln!("FAIL {} {} {} = {}", r.suite, r.scenario, r.check, fmt(r.value));
    }
    let m = Manifest {
        command: "check".into(),
        scenario: "catalog".into(),
        seed: c.seed,
        files: vec!["checks.csv".into()],
        results: [("checks".to_string(), json!(rows.len())), ("failed".to_string(), json!(failed))].into_iter().collect(),
        ..Manifest::default()
    };
    output::write_json(&c.out.join("manifest.json"), &m)?;
    Ok(failed == 0)
}

fn cmd_list(a: &ListArgs) -> Result<bool> {
    match &a.export {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for name in catalog_names() {
                let spec = build_catalog_scenario(name)?;
                std::fs::write(dir.join(format!("{name}.toml")), scenario_to_toml(&spec))?;
            }
        }
        None => {
            for name in catalog_names() {
                let spec = build_catalog_scenario(name)?;
                println!("{name}\tm={} dim={} {}", spec.m, spec.dim, if spec.fast { "oscillating" } else { "" });
            }
        }
    }
    Ok(true)
}
