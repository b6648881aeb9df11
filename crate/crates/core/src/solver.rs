//! Explicit monotone time marching for the Cauchy problem, its viscous
//! regularization and the oscillating-coefficient problem.

use crate::exec::{Executor, Sequential};
use crate::grid::{GridError, GridFunction, SpaceGrid, TimeGrid};
use crate::operator::{cfl_timestep, CoefficientTable, DiscreteOperatorConfig, FastScale, OperatorError};
use crate::scenario::SystemSpec;
use alloc::vec::Vec;
use thiserror::Error;

/// Most snapshots stored besides the initial one.
pub const MAX_SNAPSHOTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("CFL violation: requested step {requested:e} exceeds the monotone limit {limit:e}")]
    CflViolation { requested: f64, limit: f64 },
    #[error("blow-up detected at step {0}")]
    BlowUp(usize),
    #[error("initial data are not ordered: u0_low exceeds u0_high by {0:e}")]
    NotOrdered(f64),
    #[error("{0}")]
    Invalid(&'static str),
}

/// A discretized right-hand side `H^h(t, x, u)` evaluated node by node.
pub trait DiscreteOperator: Sync {
    fn grid(&self) -> SpaceGrid;

    /// Value of component `i` at node `idx`.
    fn eval(&self, u: &[Vec<f64>], i: usize, idx: usize) -> f64;

    /// Prepares evaluation at time `t`.
    fn advance_to(&mut self, t: f64) -> Result<(), SolverError>;
}

/// The scheme of a [`SystemSpec`] with optional viscosity and fast scale.
pub struct SpecOperator<'a> {
    spec: &'a SystemSpec,
    table: CoefficientTable,
    eps_visc: f64,
}

impl<'a> SpecOperator<'a> {
    pub fn new(spec: &'a SystemSpec, grid: SpaceGrid, config: &DiscreteOperatorConfig, fast: Option<FastScale>) -> Result<Self, SolverError> {
        Ok(Self { spec, table: CoefficientTable::build(spec, grid, fast, 0.0)?, eps_visc: config.eps_visc })
    }
}

impl DiscreteOperator for SpecOperator<'_> {
    fn grid(&self) -> SpaceGrid {
        self.table.grid()
    }

    #[inline]
    fn eval(&self, u: &[Vec<f64>], i: usize, idx: usize) -> f64 {
        self.table.eval(u, i, idx, self.eps_visc)
    }

    fn advance_to(&mut self, t: f64) -> Result<(), SolverError> {
        Ok(self.table.refresh(self.spec, t)?)
    }
}

/// Stored time slices of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub time: TimeGrid,
    pub snapshots: Vec<GridFunction>,
}

impl Trajectory {
    pub fn grid(&self) -> SpaceGrid {
        self.snapshots[0].grid()
    }

    pub fn initial(&self) -> &GridFunction {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &GridFunction {
        self.snapshots.last().expect("trajectory holds at least the initial slice")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.snapshots.iter().map(GridFunction::t)
    }

    /// Snapshot stored at time `t` (relative tolerance 1e-9 of the horizon).
    pub fn at(&self, t: f64) -> Option<&GridFunction> {
        let tol = 1e-9 * self.time.t_final.max(1e-300);
        self.snapshots.iter().find(|s| (s.t() - t).abs() <= tol)
    }
}

/// Time grid with snapshot stride: steps is a multiple of the snapshot count.
pub fn plan_time_grid(t_final: f64, dt_max: f64) -> Result<(TimeGrid, usize), SolverError> {
    let raw = TimeGrid::new(t_final, dt_max, 1)?;
    if raw.steps == 0 {
        return Ok((raw, 1));
    }
    let slices = raw.steps.min(MAX_SNAPSHOTS);
    let tg = TimeGrid::new(t_final, dt_max, slices)?;
    Ok((tg, tg.steps / slices))
}

/// Marches `u0` to `time.t_final` with explicit Euler, storing every
/// `stride`-th step.
pub fn march<O: DiscreteOperator, E: Executor>(
    op: &mut O,
    u0: GridFunction,
    time: TimeGrid,
    stride: usize,
    exec: &E,
) -> Result<Trajectory, SolverError> {
    if u0.grid() != op.grid() {
        return Err(GridError::GridMismatch.into());
    }
    if !u0.all_finite() {
        return Err(SolverError::BlowUp(0));
    }
    let grid = u0.grid();
    let m = u0.m();
    let mut u: Vec<Vec<f64>> = u0.components().to_vec();
    let mut next = u.clone();
    let mut snapshots = Vec::with_capacity(time.steps / stride.max(1) + 1);
    snapshots.push(u0);
    let dt = time.dt;
    for n in 0..time.steps {
        op.advance_to(time.time(n))?;
        {
            let op_ref: &O = op;
            let cur = &u;
            for (i, out) in next.iter_mut().enumerate() {
                exec.fill(out, &|idx| cur[i][idx] - dt * op_ref.eval(cur, i, idx));
            }
        }
        core::mem::swap(&mut u, &mut next);
        if u.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SolverError::BlowUp(n + 1));
        }
        if (n + 1) % stride == 0 || n + 1 == time.steps {
            let t = time.time(n + 1);
            snapshots.push(GridFunction::from_values(grid, t, u.clone())?);
        }
    }
    debug_assert!(snapshots.iter().all(|s| s.m() == m));
    Ok(Trajectory { time, snapshots })
}

/// Run parameters of [`solve_parabolic_with`].
#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub config: DiscreteOperatorConfig,
    pub fast: Option<FastScale>,
    /// Explicit step; refused when above the CFL limit.
    pub dt: Option<f64>,
    /// Initial data; defaults to the node sampling of `spec.u0`.
    pub u0: Option<GridFunction>,
}

/// Solves `u_t + H_i(t, x, u, Du_i, D^2u_i) = 0` on the torus with the spec's
/// initial data.
pub fn solve_parabolic(
    spec: &SystemSpec,
    grid: SpaceGrid,
    t_final: f64,
    config: &DiscreteOperatorConfig,
    fast: Option<FastScale>,
) -> Result<Trajectory, SolverError> {
    let opts = SolveOptions { config: *config, fast, ..SolveOptions::default() };
    solve_parabolic_with(spec, grid, t_final, &opts, &Sequential)
}

pub fn solve_parabolic_with<E: Executor>(
    spec: &SystemSpec,
    grid: SpaceGrid,
    t_final: f64,
    opts: &SolveOptions,
    exec: &E,
) -> Result<Trajectory, SolverError> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(SolverError::Invalid("horizon must be finite and nonnegative"));
    }
    if !(opts.config.eps_visc >= 0.0) {
        return Err(SolverError::Invalid("viscosity must be nonnegative"));
    }
    let limit = cfl_timestep(spec, grid.h(), &opts.config);
    let dt_max = match opts.dt {
        Some(dt) if dt > limit => return Err(SolverError::CflViolation { requested: dt, limit }),
        Some(dt) if !(dt > 0.0) => return Err(SolverError::Invalid("time step must be positive")),
        Some(dt) => dt,
        None => limit,
    };
    let u0 = match &opts.u0 {
        Some(u0) => {
            if u0.grid() != grid || u0.m() != spec.m {
                return Err(GridError::GridMismatch.into());
            }
            u0.clone()
        }
        None => GridFunction::sample_fields(grid, &spec.u0, 0.0),
    };
    let mut op = SpecOperator::new(spec, grid, &opts.config, opts.fast)?;
    let (time, stride) = plan_time_grid(t_final, dt_max)?;
    march(&mut op, u0, time, stride, exec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub pass: bool,
    /// Largest positive part of `u_low - u_high` over stored slices.
    pub max_violation: f64,
    pub slices: usize,
}

/// Tolerance of the discrete comparison principle.
pub const COMPARISON_TOL: f64 = 1e-12;

/// Evolves ordered data and checks the ordering at every stored slice.
pub fn check_comparison(
    spec: &SystemSpec,
    u0_low: &GridFunction,
    u0_high: &GridFunction,
    t_final: f64,
    opts: &SolveOptions,
) -> Result<ComparisonReport, SolverError> {
    let gap = max_gap(u0_low, u0_high)?;
    if gap > 0.0 {
        return Err(SolverError::NotOrdered(gap));
    }
    let grid = u0_low.grid();
    let run = |u0: &GridFunction| {
        let o = SolveOptions { u0: Some(u0.clone()), ..opts.clone() };
        solve_parabolic_with(spec, grid, t_final, &o, &Sequential)
    };
    let low = run(u0_low)?;
    let high = run(u0_high)?;
    compare_trajectories(&low, &high)
}

/// Largest `u_low - u_high` over slices, reported against [`COMPARISON_TOL`].
pub fn compare_trajectories(low: &Trajectory, high: &Trajectory) -> Result<ComparisonReport, SolverError> {
    if low.snapshots.len() != high.snapshots.len() {
        return Err(SolverError::Invalid("trajectories store different slices"));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in low.snapshots.iter().zip(&high.snapshots) {
        worst = worst.max(max_gap(a, b)?);
    }
    Ok(ComparisonReport { pass: worst <= COMPARISON_TOL, max_violation: worst, slices: low.snapshots.len() })
}

fn max_gap(low: &GridFunction, high: &GridFunction) -> Result<f64, SolverError> {
    if low.grid() != high.grid() || low.m() != high.m() {
        return Err(GridError::GridMismatch.into());
    }
    let mut worst = f64::NEG_INFINITY;
    for (a, b) in low.components().iter().zip(high.components()) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max(x - y);
        }
    }
    Ok(worst)
}

/// Spatially constant barriers `+-(|u0| + exp(C t))` with
/// `C = L + 1 + C_f + L |u0|`, where `|f(x, r, 0)| <= C_f + L |r|`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierReport {
    pub c_tilde: f64,
    pub lipschitz_r: f64,
    pub pass: bool,
    pub max_violation: f64,
}

pub fn barrier_constant(spec: &SystemSpec, u0_norm: f64) -> (f64, f64) {
    let l = spec
        .coefficients
        .iter()
        .map(|b| b.d.iter().map(|f| f.sup_bound()).sum::<f64>())
        .fold(0.0, f64::max);
    (l + 1.0 + spec.constants.c_sup + l * u0_norm, l)
}

pub fn check_barrier(spec: &SystemSpec, traj: &Trajectory) -> BarrierReport {
    let norm0 = traj.initial().sup_norm();
    let (c_tilde, l) = barrier_constant(spec, norm0);
    let mut worst: f64 = 0.0;
    for s in &traj.snapshots {
        let bound = norm0 + libm::exp(c_tilde * s.t());
        worst = worst.max(s.sup_norm() - bound);
    }
    BarrierReport { c_tilde, lipschitz_r: l, pass: worst <= COMPARISON_TOL, max_violation: worst.max(0.0) }
}
