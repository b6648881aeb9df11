//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p homlab --test acceptance`.

use homlab_core::cell::{effective_hamiltonian, effective_linear_coeffs, check_effective_properties, CellProblemInstance, DEFAULT_SCHEDULE};
use homlab_core::estimates::{cde_rhs_control, cde_rhs_general, holder_bound, linfty_bound, relative_spread};
use homlab_core::exec::Sequential;
use homlab_core::experiments::{homogenization_study, perturb, vanishing_viscosity_study, HomogenizationOptions, PerturbationKind};
use homlab_core::grid::{GridFunction, SpaceGrid};
use homlab_core::operator::{DiscreteOperatorConfig, FastScale};
use homlab_core::scenario::{build_catalog_scenario, catalog_names, SystemSpec};
use homlab_core::solver::{check_barrier, check_comparison, solve_parabolic, solve_parabolic_with, SolveOptions, Trajectory};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<(bool, String), String>;

fn spec(name: &str) -> Result<SystemSpec, String> {
    build_catalog_scenario(name).map_err(|e| e.to_string())
}

fn solve(s: &SystemSpec, n: usize, t: f64, fast: Option<FastScale>) -> Result<Trajectory, String> {
    let grid = SpaceGrid::new(s.dim, n).map_err(|e| e.to_string())?;
    solve_parabolic(s, grid, t, &DiscreteOperatorConfig::default(), fast).map_err(|e| e.to_string())
}

/// Grid and fast scale used when a criterion covers the whole catalog.
fn catalog_run(s: &SystemSpec) -> (usize, Option<FastScale>) {
    (if s.dim == 1 { 64 } else { 32 }, s.fast.then(|| FastScale::new(4)))
}

fn heat_oracle() -> Outcome {
    let s = spec("heat_1d")?;
    let tr = solve(&s, 128, 0.1, None)?;
    let u = tr.last();
    let g = u.grid();
    let err = (0..g.len())
        .map(|k| (u.component(0)[k] - (-4.0 * PI * PI * 0.1f64).exp() * (TAU * g.coords(k)[0]).sin()).abs())
        .fold(0.0, f64::max);
    Ok((err <= 5e-3, format!("sup error {err:.3e} (tol 5e-3)")))
}

fn linfty() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut failed = Vec::new();
    for name in catalog_names() {
        let s = spec(name)?;
        let (n, fast) = catalog_run(&s);
        for t in [0.1, 0.5] {
            let tr = solve(&s, n, t, fast)?;
            let r = linfty_bound(&tr, &s, t).map_err(|e| e.to_string())?;
            worst = worst.max(r.observed - r.rhs - r.slack);
            if !r.pass {
                failed.push(format!("{name}@{t}"));
            }
        }
    }
    Ok((failed.is_empty(), format!("worst observed - rhs - 10h = {worst:.3e}; failures {failed:?}")))
}

fn holder() -> Outcome {
    let mut msgs = Vec::new();
    let mut ok = true;
    for name in ["heat_1d", "coupled_switch_2sys"] {
        let s = spec(name)?;
        let mut ks = Vec::new();
        for n in [64, 128, 256] {
            let tr = solve(&s, n, 0.1, None)?;
            let r = holder_bound(&tr, &s, 0.1, 0).map_err(|e| e.to_string())?;
            ok &= r.pass;
            ks.push(r.fitted_k.unwrap_or(f64::NAN));
        }
        let spread = relative_spread(&ks);
        ok &= spread <= 0.2;
        msgs.push(format!("{name} K={ks:.4?} spread {spread:.3}"));
    }
    Ok((ok, msgs.join("; ")))
}

fn l_shift() -> Outcome {
    let s = spec("heat_1d")?;
    let t = 0.2;
    let base = solve(&s, 64, t, None)?;
    let mut ks = Vec::new();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for delta in [0.1, 0.05, 0.025] {
        let s2 = perturb(&s, PerturbationKind::L, delta);
        let other = solve(&s2, 64, t, None)?;
        let r = cde_rhs_control(&s, &s2, &base, &other, t, s.mu).map_err(|e| e.to_string())?;
        worst = worst.max((r.observed - delta * t).abs());
        ok &= r.pass;
        ks.push(r.fitted_k.unwrap_or(f64::NAN));
    }
    let spread = relative_spread(&ks);
    Ok((ok && worst <= 1e-12 && spread <= 0.1, format!("|obs - delta T| max {worst:.1e}, K spread {spread:.2e}")))
}

fn general_estimate() -> Outcome {
    let s = spec("coupled_switch_2sys")?;
    let tr = solve(&s, 64, 0.1, None)?;
    let mut fails = 0;
    for alpha in [1.0, 10.0, 100.0] {
        for gb in [0.0, 1.0, 10.0] {
            let r = cde_rhs_general(&s, &s, &tr, &tr, alpha, gb, 0.1, 2000, 0).map_err(|e| e.to_string())?;
            fails += usize::from(!r.pass);
        }
    }
    let h = spec("heat_1d")?;
    let h2 = perturb(&h, PerturbationKind::L, 0.05);
    let (a, b) = (solve(&h, 64, 0.1, None)?, solve(&h2, 64, 0.1, None)?);
    let r = cde_rhs_general(&h, &h2, &a, &b, 100.0, 0.0, 0.1, 2000, 0).map_err(|e| e.to_string())?;
    let slack_ok = r.slack <= 10.0 / 64.0 + 1e-15;
    Ok((fails == 0 && r.pass && slack_ok, format!("identical pair failures {fails}/9; l-shift pair margin {:.3e}, slack {:.3e}", r.margin(), r.slack)))
}

fn vanishing_viscosity() -> Outcome {
    let s = spec("firstorder_2sys")?;
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let grid = SpaceGrid::new(1, 256).map_err(|e| e.to_string())?;
    let rep = vanishing_viscosity_study(&s, &eps, grid, 0.1, &Sequential).map_err(|e| e.to_string())?;
    let fit = rep.fit.ok_or("no fit")?;
    let c = fit.prefactor * fit.residual.exp();
    let under = rep.rows.iter().all(|r| r.error <= c * r.param.sqrt());
    Ok((fit.exponent >= 0.4 && under, format!("exponent {:.3}, errors under C eps^1/2 with C = {c:.3}: {under}", fit.exponent)))
}

fn measure_oracle() -> Outcome {
    let s = spec("hom_linear_1d")?;
    let grid = SpaceGrid::new(1, 256).map_err(|e| e.to_string())?;
    let eff = effective_linear_coeffs(&s, &[0.0; 2], grid).map_err(|e| e.to_string())?;
    let abar = eff.components[0].abar[0][0];
    let err = (abar - 3f64.sqrt()).abs();
    Ok((err <= 1e-3, format!("abar {abar:.7}, |abar - sqrt 3| {err:.1e}")))
}

fn cross_path() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, n) in [("hom_linear_1d", 128), ("hom_linear_2d", 32)] {
        let s = spec(name)?;
        let grid = SpaceGrid::new(s.dim, n).map_err(|e| e.to_string())?;
        for (x, p, xx) in [(0.0, 0.5, -1.0), (0.25, -1.0, 0.5), (0.6, 2.0, 2.0)] {
            let xp = [x, 1.0 - x];
            let inst = CellProblemInstance::new(0, xp, vec![0.0; s.m], [p, -0.5 * p], [[xx, 0.0], [0.0, -xx]]);
            let eff = effective_linear_coeffs(&s, &xp, grid).map_err(|e| e.to_string())?;
            let lam = effective_hamiltonian(&s, &inst, &DEFAULT_SCHEDULE, grid).map_err(|e| e.to_string())?.h_bar;
            worst = worst.max((lam - eff.components[0].hbar(s.dim, &inst.r, &inst.p, &inst.xmat)).abs());
        }
    }
    Ok((worst <= 1e-3, format!("largest gap {worst:.2e} (tol 1e-3)")))
}

fn effective_properties() -> Outcome {
    let mut msgs = Vec::new();
    let mut ok = true;
    for name in catalog_names() {
        let s = spec(name)?;
        if !s.fast {
            continue;
        }
        let grid = SpaceGrid::new(s.dim, if s.dim == 1 { 64 } else { 16 }).map_err(|e| e.to_string())?;
        let r = check_effective_properties(&s, 10_000, 0, grid, &DEFAULT_SCHEDULE).map_err(|e| e.to_string())?;
        let v = r.lipschitz_violations + r.ellipticity_violations + r.quasi_monotone_violations + r.convexity_violations.unwrap_or(0);
        ok &= r.pass && v == 0 && r.nu_bar >= s.constants.nu - 1e-9;
        msgs.push(format!("{name}: {v} violations, nu_bar {:.4}", r.nu_bar));
    }
    Ok((ok, msgs.join("; ")))
}

fn homogenization() -> Outcome {
    let s = spec("hom_linear_1d")?;
    let scales: Vec<FastScale> = [4, 8, 16, 32].into_iter().map(FastScale::new).collect();
    let grid = SpaceGrid::new(1, 512).map_err(|e| e.to_string())?;
    let rep = homogenization_study(&s, &scales, grid, 0.1, &HomogenizationOptions::default(), &Sequential).map_err(|e| e.to_string())?;
    let errs = rep.errors();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().ok_or("no rows")?;
    Ok((decreasing && last <= 2e-2, format!("errors [{}]", errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", "))))
}

fn comparison() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for name in catalog_names() {
        let s = spec(name)?;
        let (n, fast) = catalog_run(&s);
        let grid = SpaceGrid::new(s.dim, n).map_err(|e| e.to_string())?;
        let high = GridFunction::sample_fields(grid, &s.u0, 0.0);
        let low = high.map(|v| v - 0.3);
        let opts = SolveOptions { fast, ..SolveOptions::default() };
        let r = check_comparison(&s, &low, &high, 0.1, &opts).map_err(|e| e.to_string())?;
        let tr = solve_parabolic_with(&s, grid, 0.1, &opts, &Sequential).map_err(|e| e.to_string())?;
        let b = check_barrier(&s, &tr);
        ok &= r.pass && b.pass;
        worst = worst.max(r.max_violation).max(b.max_violation);
    }
    Ok((ok, format!("largest violation {worst:.1e} (tol 1e-12)")))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        if name != "timing.json" {
            out.insert(name, std::fs::read(e.path()).unwrap());
        }
    }
    out
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_homlab");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 5] = [
        &["solve", "--scenario", "coupled_switch_2sys", "--nx", "64"],
        &["cde", "--scenario", "coupled_switch_2sys", "--kind", "d", "--nx", "32", "--budget", "500"],
        &["cell", "--scenario", "hom_isaacs_1d", "--p", "0.5"],
        &["homogenize", "--scenario", "hom_linear_1d", "--eps", "1/2,1/4", "--t-final", "0.02"],
        &["check", "--suite", "bounds"],
    ];
    let mut mismatched = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (j, threads) in ["1", "1", "4", "4"].into_iter().enumerate() {
            let dir = tmp.path().join(format!("{i}_{j}"));
            let st = Command::new(exe).args(*args).args(["--threads", threads, "--out"]).arg(&dir).status().map_err(|e| e.to_string())?;
            if !st.success() {
                return Err(format!("{} exited with {st}", args[0]));
            }
            outputs.push(snapshot(&dir));
        }
        if outputs.iter().any(|o| *o != outputs[0]) {
            mismatched.push(args[0]);
        }
    }
    Ok((mismatched.is_empty(), format!("{} commands x 2 runs x threads {{1,4}}; mismatched {mismatched:?}", runs.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("heat kernel oracle", heat_oracle),
        ("sup-norm bound", linfty),
        ("Holder constant stability", holder),
        ("l-shift exactness", l_shift),
        ("general-form estimate", general_estimate),
        ("vanishing viscosity rate", vanishing_viscosity),
        ("invariant measure oracle", measure_oracle),
        ("cross-path agreement", cross_path),
        ("effective operator properties", effective_properties),
        ("homogenization convergence", homogenization),
        ("comparison and barrier", comparison),
        ("CLI determinism", determinism),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!("{} {:>2} {name}: {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, k + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
