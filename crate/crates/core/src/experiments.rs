//! The three headline studies (vanishing viscosity, continuous dependence
//! sweeps, periodic homogenization) and the solver of the effective problem.

use crate::cell::{effective_hamiltonian, effective_linear_coeffs, CellError, CellProblemInstance, EffectiveCoefficients, DEFAULT_SCHEDULE};
use crate::estimates::{fit_rate, EstimateError, RateFit};
use crate::exec::Executor;
use crate::grid::{GridError, GridFunction, SpaceGrid};
use crate::operator::{cfl_timestep, DiscreteOperatorConfig, FastScale, OperatorError, Stencil};
use crate::scenario::{CoefficientField, Form, SystemSpec};
use crate::solver::{march, plan_time_grid, solve_parabolic_with, DiscreteOperator, SolveOptions, SolverError, Trajectory};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("ε list not decreasing")]
    NotDecreasing,
    #[error("ε/grid incommensurate: 1/{k} does not divide a grid of {n} nodes")]
    Incommensurate { n: usize, k: usize },
    #[error("under-resolved fast scale: {n} nodes per axis, need at least {needed}")]
    UnderResolved { n: usize, needed: usize },
    #[error("effective evaluation budget exceeded ({cap} cached cell solves)")]
    BudgetExceeded { cap: usize },
    #[error("{0}")]
    Invalid(&'static str),
}

impl From<OperatorError> for ExperimentError {
    fn from(e: OperatorError) -> Self {
        Self::Solver(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentRow {
    pub param: f64,
    pub error: f64,
}

/// Error table of one study with its rate fit and verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub study: String,
    pub scenario: String,
    pub rows: Vec<ExperimentRow>,
    pub fit: Option<RateFit>,
    /// Exponent the verdict is measured against, when the study has one.
    pub expected_exponent: Option<f64>,
    pub pass: bool,
}

impl ExperimentReport {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.param).collect()
    }
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn final_gap(a: &Trajectory, b: &Trajectory) -> Result<f64, ExperimentError> {
    Ok(a.last().difference_norms(b.last())?.sup)
}

/// Solves the viscous problem `u_t + H - eps Lap u = 0` for each `eps` and
/// the inviscid one on the same grid, and fits `|u - u_eps|(T) ~ C eps^k`.
/// The verdict asks for `k >= mu/2 - 0.1`.
pub fn vanishing_viscosity_study<E: Executor>(
    spec: &SystemSpec,
    eps: &[f64],
    grid: SpaceGrid,
    t_final: f64,
    exec: &E,
) -> Result<ExperimentReport, ExperimentError> {
    if eps.len() < 3 {
        return Err(EstimateError::TooFewSamples.into());
    }
    if !strictly_decreasing(eps) {
        return Err(ExperimentError::NotDecreasing);
    }
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(ExperimentError::Invalid("viscosities must be positive"));
    }
    let seq = crate::exec::Sequential;
    let runs = exec.map(eps.len() + 1, &|k| {
        let config = if k == 0 { DiscreteOperatorConfig::default() } else { DiscreteOperatorConfig::with_viscosity(eps[k - 1]) };
        let opts = SolveOptions { config, ..SolveOptions::default() };
        solve_parabolic_with(spec, grid, t_final, &opts, &seq)
    });
    let runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(eps.len());
    for (k, e) in eps.iter().enumerate() {
        rows.push(ExperimentRow { param: *e, error: final_gap(&runs[0], &runs[k + 1])? });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let fit = fit_rate(&errors, eps)?;
    let expected = spec.mu / 2.0;
    Ok(ExperimentReport {
        study: "vanishing_viscosity".to_string(),
        scenario: spec.name.clone(),
        rows,
        pass: fit.exponent >= expected - 0.1,
        fit: Some(fit),
        expected_exponent: Some(expected),
    })
}

/// Coefficient perturbed in a continuous dependence sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationKind {
    /// `l + delta`.
    L,
    /// `b_1 + delta`.
    B,
    /// Diagonal of `a` plus `delta`.
    A,
    /// Switching rates raised by `delta` (zero row sums are kept).
    D,
}

impl PerturbationKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l" => Some(Self::L),
            "b" => Some(Self::B),
            "a" => Some(Self::A),
            "d" => Some(Self::D),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::L => "l",
            Self::B => "b",
            Self::A => "a",
            Self::D => "d",
        }
    }

    /// Exponent the continuous dependence bound predicts for this kind.
    pub fn predicted_exponent(self, mu: f64) -> f64 {
        match self {
            Self::L | Self::D => 1.0,
            Self::B | Self::A => mu,
        }
    }
}

/// `spec` with the coefficient selected by `kind` shifted by `delta`.
pub fn perturb(spec: &SystemSpec, kind: PerturbationKind, delta: f64) -> SystemSpec {
    let mut out = spec.clone();
    let bump = CoefficientField::constant(delta);
    let dim = spec.dim;
    let m = spec.m;
    for br in &mut out.coefficients {
        match kind {
            PerturbationKind::L => br.l = br.l.plus(&bump),
            PerturbationKind::B => br.b[0] = br.b[0].plus(&bump),
            PerturbationKind::A => {
                for k in 0..dim {
                    br.a[k * dim + k] = br.a[k * dim + k].plus(&bump);
                }
            }
            PerturbationKind::D => {
                let i = br.component;
                if m == 1 {
                    br.d[0] = br.d[0].plus(&bump);
                } else {
                    let off = CoefficientField::constant(-delta / (m - 1) as f64);
                    for j in 0..m {
                        br.d[j] = if j == i { br.d[j].plus(&bump) } else { br.d[j].plus(&off) };
                    }
                }
            }
        }
    }
    out.name = alloc::format!("{}+{}:{:e}", spec.name, kind.name(), delta);
    out
}

/// Solves the base problem and one perturbed problem per `delta` with a
/// common time step and fits `|u1 - u2|(T)` against `delta`. The verdict
/// compares the exponent with the structural prediction (1 for `l`/`d`,
/// `mu` for `b`/`a`) within 0.15. Zero entries of `delta` are tabulated but
/// left out of the fit.
pub fn continuous_dependence_sweep<E: Executor>(
    spec: &SystemSpec,
    kind: PerturbationKind,
    deltas: &[f64],
    grid: SpaceGrid,
    t_final: f64,
    exec: &E,
) -> Result<ExperimentReport, ExperimentError> {
    if spec.form != Form::Control {
        return Err(EstimateError::NotControlForm.into());
    }
    if deltas.is_empty() || !strictly_decreasing(deltas) || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(ExperimentError::NotDecreasing);
    }
    let specs: Vec<SystemSpec> = deltas.iter().map(|&d| perturb(spec, kind, d)).collect();
    let config = DiscreteOperatorConfig::default();
    let dt = specs.iter().map(|s| cfl_timestep(s, grid.h(), &config)).fold(cfl_timestep(spec, grid.h(), &config), f64::min);
    let seq = crate::exec::Sequential;
    let runs = exec.map(deltas.len() + 1, &|k| {
        let s = if k == 0 { spec } else { &specs[k - 1] };
        let opts = SolveOptions { config, dt: Some(dt), ..SolveOptions::default() };
        solve_parabolic_with(s, grid, t_final, &opts, &seq)
    });
    let runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(deltas.len());
    for (k, d) in deltas.iter().enumerate() {
        rows.push(ExperimentRow { param: *d, error: final_gap(&runs[0], &runs[k + 1])? });
    }
    let expected = kind.predicted_exponent(spec.mu);
    let positive: Vec<&ExperimentRow> = rows.iter().filter(|r| r.param > 0.0).collect();
    let (fit, pass) = if positive.len() >= 3 {
        let e: Vec<f64> = positive.iter().map(|r| r.error).collect();
        let p: Vec<f64> = positive.iter().map(|r| r.param).collect();
        let f = fit_rate(&e, &p)?;
        let ok = (f.exponent - expected).abs() <= 0.15 && rows.iter().all(|r| r.param > 0.0 || r.error <= 1e-12);
        (Some(f), ok)
    } else {
        (None, rows.iter().all(|r| r.param > 0.0 || r.error <= 1e-12))
    };
    Ok(ExperimentReport {
        study: alloc::format!("continuous_dependence_{}", kind.name()),
        scenario: spec.name.clone(),
        rows,
        fit,
        expected_exponent: Some(expected),
        pass,
    })
}

/// How the effective Hamiltonian is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EffectivePath {
    /// Invariant measures when the diffusion is control free, cell solves otherwise.
    #[default]
    Auto,
    /// Invariant-measure averaging; refused for control-dependent diffusion.
    Measure,
    /// Discounted cell solves with extrapolation in the discount.
    Corrector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveOptions {
    pub path: EffectivePath,
    /// Cell grid; `None` selects 128 nodes in 1D and 64 per axis in 2D.
    pub cell_grid: Option<SpaceGrid>,
    pub schedule: Vec<f64>,
    /// Largest number of cached cell solves.
    pub cache_cap: usize,
    /// Rounding of `(r, p, X)` in the cell-solve cache.
    pub quantum: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self { path: EffectivePath::Auto, cell_grid: None, schedule: DEFAULT_SCHEDULE.to_vec(), cache_cap: 1 << 20, quantum: 1e-3 }
    }
}

impl EffectiveOptions {
    pub fn cell_grid_for(&self, dim: usize) -> Result<SpaceGrid, GridError> {
        match self.cell_grid {
            Some(g) => Ok(g),
            None => SpaceGrid::new(dim, if dim == 1 { 128 } else { 64 }),
        }
    }
}

/// Effective operator assembled from invariant measures.
struct MeasureOperator {
    grid: SpaceGrid,
    /// One entry when the coefficients do not depend on `x`, else one per node.
    coeffs: Vec<EffectiveCoefficients>,
}

impl MeasureOperator {
    fn new(spec: &SystemSpec, grid: SpaceGrid, cell: SpaceGrid) -> Result<Self, ExperimentError> {
        let points: Vec<usize> = if spec.depends_on_x() { (0..grid.len()).collect() } else { vec![0] };
        let mut coeffs = Vec::with_capacity(points.len());
        for idx in points {
            let x = if spec.depends_on_x() { grid.coords(idx) } else { [0.0; 2] };
            let eff = effective_linear_coeffs(spec, &x, cell)?;
            if spec.dim == 2 {
                for c in &eff.components {
                    let scale = c.abar[0][0].abs() + c.abar[1][1].abs();
                    if c.abar[0][1].abs() > 1e-12 * scale.max(1.0) {
                        return Err(OperatorError::CrossDiffusion.into());
                    }
                }
            }
            coeffs.push(eff);
        }
        Ok(Self { grid, coeffs })
    }
}

impl DiscreteOperator for MeasureOperator {
    fn grid(&self) -> SpaceGrid {
        self.grid
    }

    fn eval(&self, u: &[Vec<f64>], i: usize, idx: usize) -> f64 {
        let eff = if self.coeffs.len() == 1 { &self.coeffs[0] } else { &self.coeffs[idx] };
        let st = Stencil::at(&self.grid, &u[i], idx);
        eff.components[i].scheme_value(&st, u, idx)
    }

    fn advance_to(&mut self, _t: f64) -> Result<(), SolverError> {
        Ok(())
    }
}

/// Cache key of one cell solve: component, slow node and rounded `(r, p, X)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    component: usize,
    node: usize,
    args: Vec<i64>,
}

struct CorrectorCache<'a> {
    spec: &'a SystemSpec,
    grid: SpaceGrid,
    cell: SpaceGrid,
    schedule: &'a [f64],
    quantum: f64,
    cap: usize,
    x_dependent: bool,
    r_dependent: bool,
    values: BTreeMap<CellKey, f64>,
}

impl<'a> CorrectorCache<'a> {
    fn key(&self, u: &[Vec<f64>], i: usize, idx: usize) -> CellKey {
        let dim = self.grid.dim();
        let st = Stencil::at(&self.grid, &u[i], idx);
        let q = |v: f64| libm::round(v / self.quantum) as i64;
        let mut args = Vec::with_capacity(u.len() + 2 * dim);
        for uj in u {
            args.push(if self.r_dependent { q(uj[idx]) } else { 0 });
        }
        for k in 0..dim {
            args.push(q(0.5 * (st.dp[k] + st.dm[k])));
        }
        for k in 0..dim {
            args.push(q(st.d2[k]));
        }
        CellKey { component: i, node: if self.x_dependent { idx } else { 0 }, args }
    }

    fn solve(&self, key: &CellKey) -> Result<f64, CellError> {
        let m = self.spec.m;
        let dim = self.grid.dim();
        let v = |k: usize| key.args[k] as f64 * self.quantum;
        let r: Vec<f64> = (0..m).map(v).collect();
        let mut p = [0.0; 2];
        let mut xmat = [[0.0; 2]; 2];
        for k in 0..dim {
            p[k] = v(m + k);
            xmat[k][k] = v(m + dim + k);
        }
        let x = if self.x_dependent { self.grid.coords(key.node) } else { [0.0; 2] };
        let inst = CellProblemInstance::new(key.component, x, r, p, xmat);
        Ok(effective_hamiltonian(self.spec, &inst, self.schedule, self.cell)?.h_bar)
    }

    /// Solves every key not yet cached, in key order.
    fn fill<E: Executor>(&mut self, keys: &[CellKey], exec: &E) -> Result<(), ExperimentError> {
        let missing: Vec<CellKey> = keys.iter().filter(|k| !self.values.contains_key(k)).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        if missing.is_empty() {
            return Ok(());
        }
        if self.values.len() + missing.len() > self.cap {
            return Err(ExperimentError::BudgetExceeded { cap: self.cap });
        }
        let this: &Self = self;
        let solved = exec.map(missing.len(), &|k| this.solve(&missing[k]));
        for (key, val) in missing.into_iter().zip(solved) {
            self.values.insert(key, val?);
        }
        Ok(())
    }
}

/// Explicit marching of the effective problem with cached cell solves; keys
/// use central first differences and diagonal second differences.
fn march_corrector<E: Executor>(
    spec: &SystemSpec,
    grid: SpaceGrid,
    t_final: f64,
    opts: &EffectiveOptions,
    exec: &E,
) -> Result<Trajectory, ExperimentError> {
    let cell = opts.cell_grid_for(spec.dim)?;
    let mut cache = CorrectorCache {
        spec,
        grid,
        cell,
        schedule: &opts.schedule,
        quantum: opts.quantum,
        cap: opts.cache_cap,
        x_dependent: spec.depends_on_x(),
        r_dependent: !spec.coefficients.iter().all(|b| b.d.iter().all(CoefficientField::is_zero)),
        values: BTreeMap::new(),
    };
    let dt_max = cfl_timestep(spec, grid.h(), &DiscreteOperatorConfig::default());
    let (time, stride) = plan_time_grid(t_final, dt_max)?;
    let u0 = GridFunction::sample_fields(grid, &spec.u0, 0.0);
    let mut u: Vec<Vec<f64>> = u0.components().to_vec();
    let mut snapshots = vec![u0];
    let nodes = grid.len();
    let mut keys = Vec::with_capacity(spec.m * nodes);
    for n in 0..time.steps {
        keys.clear();
        for i in 0..spec.m {
            for idx in 0..nodes {
                keys.push(cache.key(&u, i, idx));
            }
        }
        cache.fill(&keys, exec)?;
        let next: Vec<Vec<f64>> = (0..spec.m)
            .map(|i| (0..nodes).map(|idx| u[i][idx] - time.dt * cache.values[&keys[i * nodes + idx]]).collect())
            .collect();
        u = next;
        if u.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SolverError::BlowUp(n + 1).into());
        }
        if (n + 1) % stride == 0 || n + 1 == time.steps {
            snapshots.push(GridFunction::from_values(grid, time.time(n + 1), u.clone())?);
        }
    }
    Ok(Trajectory { time, snapshots })
}

/// Solves `u_t + Hbar_i(x, u, Du_i, D^2 u_i) = 0` with the same time marching
/// contract as the oscillating problem. Specs without a fast variable are
/// their own effective problem.
pub fn effective_problem_solver<E: Executor>(
    spec: &SystemSpec,
    grid: SpaceGrid,
    t_final: f64,
    opts: &EffectiveOptions,
    exec: &E,
) -> Result<Trajectory, ExperimentError> {
    if !spec.fast {
        return Ok(solve_parabolic_with(spec, grid, t_final, &SolveOptions::default(), exec)?);
    }
    if spec.depends_on_t() {
        return Err(ExperimentError::Invalid("effective problem needs time-independent coefficients"));
    }
    if spec.dim != grid.dim() {
        return Err(OperatorError::DimensionMismatch("grid").into());
    }
    let linear = (0..spec.m).all(|i| spec.diffusion_is_control_free(i));
    match (opts.path, linear) {
        (EffectivePath::Measure, false) => Err(CellError::NotLinear(0).into()),
        (EffectivePath::Corrector, _) | (EffectivePath::Auto, false) => march_corrector(spec, grid, t_final, opts, exec),
        _ => {
            let cell = opts.cell_grid_for(spec.dim)?;
            let mut op = MeasureOperator::new(spec, grid, cell)?;
            let dt_max = cfl_timestep(spec, grid.h(), &DiscreteOperatorConfig::default());
            let (time, stride) = plan_time_grid(t_final, dt_max)?;
            let u0 = GridFunction::sample_fields(grid, &spec.u0, 0.0);
            Ok(march(&mut op, u0, time, stride, exec)?)
        }
    }
}

/// Grid of the effective problem in a homogenization study; defaults to the
/// oscillating problem's grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HomogenizationOptions {
    pub effective: EffectiveOptions,
    pub effective_grid: Option<SpaceGrid>,
}

/// Solves the oscillating problem for each `eps = 1/k` and the effective
/// problem once, and tabulates the sup error at `T` on the coarser of the two
/// grids. The verdict is strict decrease of the errors (or all errors below
/// `1e-12`).
pub fn homogenization_study<E: Executor>(
    spec: &SystemSpec,
    scales: &[FastScale],
    grid: SpaceGrid,
    t_final: f64,
    opts: &HomogenizationOptions,
    exec: &E,
) -> Result<ExperimentReport, ExperimentError> {
    if scales.is_empty() || !scales.windows(2).all(|w| w[1].k() > w[0].k()) {
        return Err(ExperimentError::NotDecreasing);
    }
    let n = grid.n();
    if spec.fast {
        for s in scales {
            if s.k() == 0 || n % s.k() != 0 {
                return Err(ExperimentError::Incommensurate { n, k: s.k() });
            }
        }
        let needed = 16 * scales.iter().map(|s| s.k()).max().unwrap_or(1);
        if n < needed {
            return Err(ExperimentError::UnderResolved { n, needed });
        }
    }
    let eff_grid = opts.effective_grid.unwrap_or(grid);
    let coarse = if eff_grid.n() <= n { eff_grid } else { grid };
    let reference = effective_problem_solver(spec, eff_grid, t_final, &opts.effective, exec)?;
    let reference = reference.last().restrict(coarse)?;
    let seq = crate::exec::Sequential;
    let runs = exec.map(scales.len(), &|k| {
        let fast = if spec.fast { Some(scales[k]) } else { None };
        let o = SolveOptions { fast, ..SolveOptions::default() };
        solve_parabolic_with(spec, grid, t_final, &o, &seq)
    });
    let mut rows = Vec::with_capacity(scales.len());
    for (s, run) in scales.iter().zip(runs) {
        let run = run?;
        let err = run.last().restrict(coarse)?.difference_norms(&reference)?.sup;
        rows.push(ExperimentRow { param: s.epsilon(), error: err });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let params: Vec<f64> = rows.iter().map(|r| r.param).collect();
    let fit = fit_rate(&errors, &params).ok();
    let pass = strictly_decreasing(&errors) || errors.iter().all(|e| *e <= 1e-12);
    Ok(ExperimentReport {
        study: "homogenization".to_string(),
        scenario: spec.name.clone(),
        rows,
        fit,
        expected_exponent: None,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::scenario::build_catalog_scenario;
    use crate::solver::solve_parabolic;
    use core::f64::consts::PI;

    #[test]
    fn vanishing_viscosity_rejects_unordered_list() {
        let spec = build_catalog_scenario("firstorder_2sys").unwrap();
        let g = SpaceGrid::new(1, 16).unwrap();
        let err = vanishing_viscosity_study(&spec, &[0.1, 0.1, 0.1], g, 0.1, &Sequential).unwrap_err();
        assert_eq!(err.to_string(), "ε list not decreasing");
    }

    #[test]
    fn viscosity_on_heat_is_first_order() {
        let spec = build_catalog_scenario("heat_1d").unwrap();
        let g = SpaceGrid::new(1, 64).unwrap();
        let rep = vanishing_viscosity_study(&spec, &[0.04, 0.02, 0.01], g, 0.05, &Sequential).unwrap();
        let k = rep.fit.unwrap().exponent;
        assert!((k - 1.0).abs() < 0.2, "{k}");
        assert!(rep.pass);
    }

    #[test]
    fn l_sweep_is_exact_shift() {
        let spec = build_catalog_scenario("heat_1d").unwrap();
        let g = SpaceGrid::new(1, 32).unwrap();
        let rep = continuous_dependence_sweep(&spec, PerturbationKind::L, &[0.1, 0.05, 0.025, 0.0], g, 0.2, &Sequential).unwrap();
        for r in &rep.rows {
            assert!((r.error - r.param * 0.2).abs() < 1e-12, "{r:?}");
        }
        assert!((rep.fit.unwrap().exponent - 1.0).abs() < 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn d_sweep_on_switching_system_is_linear() {
        let spec = build_catalog_scenario("coupled_switch_2sys").unwrap();
        let g = SpaceGrid::new(1, 32).unwrap();
        let rep = continuous_dependence_sweep(&spec, PerturbationKind::D, &[0.1, 0.05, 0.025], g, 0.2, &Sequential).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn perturbations_keep_generator_rows() {
        let spec = build_catalog_scenario("coupled_switch_2sys").unwrap();
        let p = perturb(&spec, PerturbationKind::D, 0.3);
        assert!(p.check_generator_rows().is_ok());
    }

    #[test]
    fn homogenization_preconditions() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let g = SpaceGrid::new(1, 48).unwrap();
        let o = HomogenizationOptions::default();
        let e = homogenization_study(&spec, &[FastScale::new(2), FastScale::new(5)], g, 0.01, &o, &Sequential).unwrap_err();
        assert!(e.to_string().starts_with("ε/grid incommensurate"));
        let e = homogenization_study(&spec, &[FastScale::new(2), FastScale::new(4)], g, 0.01, &o, &Sequential).unwrap_err();
        assert!(e.to_string().starts_with("under-resolved fast scale"));
    }

    #[test]
    fn slow_only_spec_is_its_own_limit() {
        let spec = build_catalog_scenario("heat_1d").unwrap();
        let g = SpaceGrid::new(1, 32).unwrap();
        let a = effective_problem_solver(&spec, g, 0.05, &EffectiveOptions::default(), &Sequential).unwrap();
        let b = solve_parabolic(&spec, g, 0.05, &DiscreteOperatorConfig::default(), None).unwrap();
        assert_eq!(a, b);
        let rep = homogenization_study(&spec, &[FastScale::new(1), FastScale::new(2)], g, 0.05, &HomogenizationOptions::default(), &Sequential).unwrap();
        assert!(rep.errors().iter().all(|e| *e == 0.0) && rep.pass);
    }

    #[test]
    fn effective_heat_matches_closed_form() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let g = SpaceGrid::new(1, 64).unwrap();
        let tr = effective_problem_solver(&spec, g, 0.05, &EffectiveOptions::default(), &Sequential).unwrap();
        let decay = libm::exp(-libm::sqrt(3.0) * 4.0 * PI * PI * 0.05);
        let err = (0..g.len()).map(|k| (tr.last().component(0)[k] - decay * libm::sin(2.0 * PI * g.coords(k)[0])).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn corrector_path_agrees_with_measure_path() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let g = SpaceGrid::new(1, 16).unwrap();
        let measure = effective_problem_solver(&spec, g, 0.02, &EffectiveOptions::default(), &Sequential).unwrap();
        let opts = EffectiveOptions { path: EffectivePath::Corrector, cell_grid: Some(SpaceGrid::new(1, 64).unwrap()), ..EffectiveOptions::default() };
        let corr = effective_problem_solver(&spec, g, 0.02, &opts, &Sequential).unwrap();
        let gap = measure.last().difference_norms(corr.last()).unwrap().sup;
        assert!(gap <= 2e-3, "{gap}");
    }

    #[test]
    fn budget_cap_is_enforced() {
        let spec = build_catalog_scenario("hom_isaacs_1d").unwrap();
        let g = SpaceGrid::new(1, 8).unwrap();
        let opts = EffectiveOptions { cache_cap: 4, cell_grid: Some(SpaceGrid::new(1, 16).unwrap()), ..EffectiveOptions::default() };
        let e = effective_problem_solver(&spec, g, 0.01, &opts, &Sequential).unwrap_err();
        assert!(e.to_string().starts_with("effective evaluation budget exceeded"));
    }
}
