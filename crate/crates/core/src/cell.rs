//! Periodic cell problems: discounted correctors, ergodic constants,
//! invariant measures and effective coefficients.
//!
//! For a frozen slow point `x`, values `r`, gradient `p` and Hessian `X`,
//! the discounted corrector solves on the unit cell
//!
//! ```text
//! lambda v + min_zeta max_theta { -tr(A(x,y) (X + D2 v)) + f(x,y,r,p) } = 0
//! ```
//!
//! and `-lambda v` tends to the effective value `Hbar_i(x, r, p, X)`.
//! The discrete equation is solved by policy iteration (semismooth Newton):
//! each step freezes the active branch at every cell node and solves the
//! resulting linear periodic problem exactly.

use crate::grid::{GridFunction, SpaceGrid};
use crate::linalg::{bicgstab, solve_cyclic_tridiagonal};
use crate::operator::{branch_value, NodeBranch, OperatorError, Stencil};
use crate::sampling::SampleRng;
use crate::scenario::{sample_branch, Point, ScenarioError, SystemSpec};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Default discount schedule.
pub const DEFAULT_SCHEDULE: [f64; 3] = [0.1, 0.05, 0.025];
/// Residual target of the discounted corrector equation.
pub const CELL_TOL: f64 = 1e-9;
/// Newton (policy iteration) budget per discount.
pub const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("cell iteration stalled (residual {residual:e})")]
    Stalled { residual: f64 },
    #[error("no ergodic limit detected (spreads {spreads:?})")]
    NoErgodicLimit { spreads: Vec<f64> },
    #[error("invariant measure iteration stalled (residual {residual:e})")]
    MeasureStalled { residual: f64 },
    #[error("diffusion of component {0} depends on the controls; no linear effective path")]
    NotLinear(usize),
    #[error("cell problems need a uniformly elliptic scenario")]
    NotElliptic,
    #[error("discount schedule must hold at least 3 strictly decreasing positive values")]
    BadSchedule,
    #[error("discount must be positive")]
    BadDiscount,
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Frozen arguments of one cell problem.
#[derive(Clone, Debug, PartialEq)]
pub struct CellProblemInstance {
    pub component: usize,
    pub x: Point,
    pub r: Vec<f64>,
    pub p: [f64; 2],
    /// Symmetric Hessian argument; only the leading `dim x dim` block is used.
    pub xmat: [[f64; 2]; 2],
}

impl CellProblemInstance {
    pub fn new(component: usize, x: Point, r: Vec<f64>, p: [f64; 2], xmat: [[f64; 2]; 2]) -> Self {
        Self { component, x, r, p, xmat }
    }

    /// Scalar instance for one-dimensional, single-component scenarios.
    pub fn scalar(x: f64, r: f64, p: f64, xx: f64) -> Self {
        Self::new(0, [x, 0.0], vec![r], [p, 0.0], [[xx, 0.0], [0.0, 0.0]])
    }
}

/// Branch data sampled on the cell grid: diffusion diagonal and the frozen
/// remainder `c = -tr(A X) + f(x, y, r, p)`.
struct CellOperator {
    grid: SpaceGrid,
    nt: usize,
    nz: usize,
    diag: Vec<[f64; 2]>,
    cst: Vec<f64>,
}

impl CellOperator {
    fn new(spec: &SystemSpec, inst: &CellProblemInstance, grid: SpaceGrid) -> Result<Self, CellError> {
        check_instance(spec, inst, grid)?;
        let (nt, nz) = spec.controls.sizes();
        let nodes = grid.len();
        let mut diag = vec![[0.0; 2]; nt * nz * nodes];
        let mut cst = vec![0.0; nt * nz * nodes];
        for th in 0..nt {
            for z in 0..nz {
                let br = spec.branch(inst.component, th, z);
                let b = th * nz + z;
                for idx in 0..nodes {
                    let y = grid.coords(idx);
                    let s = sample_branch(br, spec.dim, 0.0, &inst.x, &y);
                    if spec.dim == 2 && s.diffusion[0][1].abs() > 1e-14 * (s.diffusion[0][0] + s.diffusion[1][1]).max(1.0) {
                        return Err(OperatorError::CrossDiffusion.into());
                    }
                    diag[b * nodes + idx] = [s.diffusion[0][0], s.diffusion[1][1]];
                    cst[b * nodes + idx] = -s.trace_ax(&inst.xmat) + s.lower_order(&inst.r, &inst.p);
                }
            }
        }
        Ok(Self { grid, nt, nz, diag, cst })
    }

    fn second_differences(&self, w: &[f64], idx: usize) -> [f64; 2] {
        let g = &self.grid;
        let h2 = g.h() * g.h();
        let mut d2 = [0.0; 2];
        let wc = w[idx];
        for k in 0..g.dim() {
            d2[k] = ((w[g.neighbor(idx, k, 1)] - wc) + (w[g.neighbor(idx, k, -1)] - wc)) / h2;
        }
        d2
    }

    /// Sup residual of `lambda (w + kappa) + H(...)`, recording the active
    /// branch per node.
    fn residual(&self, lambda: f64, kappa: f64, w: &[f64], policy: &mut [usize]) -> f64 {
        let nodes = self.grid.len();
        let mut worst: f64 = 0.0;
        for idx in 0..nodes {
            let d2 = self.second_differences(w, idx);
            let mut lo = f64::INFINITY;
            let mut lo_branch = 0;
            for z in 0..self.nz {
                let mut hi = f64::NEG_INFINITY;
                let mut hi_branch = 0;
                for th in 0..self.nt {
                    let b = th * self.nz + z;
                    let a = &self.diag[b * nodes + idx];
                    let v = self.cst[b * nodes + idx] - (a[0] * d2[0] + a[1] * d2[1]);
                    if v > hi {
                        hi = v;
                        hi_branch = b;
                    }
                }
                if hi < lo {
                    lo = hi;
                    lo_branch = hi_branch;
                }
            }
            policy[idx] = lo_branch;
            // group the discount with the frozen part to keep cancellation exact
            worst = worst.max((lambda * w[idx] + (lambda * kappa + lo)).abs());
        }
        worst
    }

    /// Solves `lambda w - A_pi D2 w = -(c_pi + lambda kappa)` for a fixed policy.
    fn solve_policy(&self, lambda: f64, kappa: f64, policy: &[usize], w: &mut [f64]) -> Result<(), CellError> {
        let g = self.grid;
        let nodes = g.len();
        let inv_h2 = 1.0 / (g.h() * g.h());
        let rhs: Vec<f64> = (0..nodes).map(|idx| -(self.cst[policy[idx] * nodes + idx] + lambda * kappa)).collect();
        let a = |idx: usize| self.diag[policy[idx] * nodes + idx];
        if g.dim() == 1 {
            let off: Vec<f64> = (0..nodes).map(|idx| -a(idx)[0] * inv_h2).collect();
            let diag: Vec<f64> = (0..nodes).map(|idx| lambda + 2.0 * a(idx)[0] * inv_h2).collect();
            let sol = solve_cyclic_tridiagonal(&off, &diag, &off, &rhs).ok_or(CellError::Stalled { residual: f64::NAN })?;
            w.copy_from_slice(&sol);
            // one step of iterative refinement against the frozen-policy residual
            let defect: Vec<f64> = (0..nodes)
                .map(|idx| {
                    let d2 = self.second_differences(w, idx)[0];
                    -(lambda * w[idx] - a(idx)[0] * d2 - rhs[idx])
                })
                .collect();
            let fix = solve_cyclic_tridiagonal(&off, &diag, &off, &defect).ok_or(CellError::Stalled { residual: f64::NAN })?;
            for (wi, f) in w.iter_mut().zip(fix) {
                *wi += f;
            }
            return Ok(());
        }
        let diag: Vec<f64> = (0..nodes).map(|idx| lambda + 2.0 * (a(idx)[0] + a(idx)[1]) * inv_h2).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for idx in 0..nodes {
                let d2 = self.second_differences(x, idx);
                let ai = a(idx);
                out[idx] = lambda * x[idx] - (ai[0] * d2[0] + ai[1] * d2[1]);
            }
        };
        let out = bicgstab(apply, &diag, &rhs, w, 0.05 * CELL_TOL, 50 * nodes);
        if !out.converged {
            return Err(CellError::Stalled { residual: out.residual });
        }
        Ok(())
    }
}

fn check_instance(spec: &SystemSpec, inst: &CellProblemInstance, grid: SpaceGrid) -> Result<(), CellError> {
    if inst.component >= spec.m {
        return Err(ScenarioError::IndexOutOfRange("component").into());
    }
    if inst.r.len() != spec.m {
        return Err(OperatorError::DimensionMismatch("r").into());
    }
    if grid.dim() != spec.dim {
        return Err(OperatorError::DimensionMismatch("cell grid").into());
    }
    if spec.dim == 2 && inst.xmat[0][1] != inst.xmat[1][0] {
        return Err(OperatorError::AsymmetricMatrix.into());
    }
    if !(spec.constants.nu > 0.0) {
        return Err(CellError::NotElliptic);
    }
    Ok(())
}

/// Discounted corrector `v = offset + w`; the split keeps the large constant
/// part `~ -Hbar/lambda` out of the difference quotients.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorLevel {
    pub lambda: f64,
    pub offset: f64,
    pub w: Vec<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
}

impl CorrectorLevel {
    pub fn values(&self) -> Vec<f64> {
        self.w.iter().map(|w| w + self.offset).collect()
    }

    /// `-lambda` times the cell average of `v`.
    pub fn ergodic_estimate(&self) -> f64 {
        let mean = self.w.iter().sum::<f64>() / self.w.len() as f64;
        -(self.lambda * self.offset + self.lambda * mean)
    }

    /// `lambda * osc(v)`.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        self.lambda * (hi - lo)
    }
}

fn solve_level(op: &CellOperator, lambda: f64, warm: Option<&[f64]>) -> Result<CorrectorLevel, CellError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CellError::BadDiscount);
    }
    let nodes = op.grid.len();
    let mut w = match warm {
        Some(w0) => w0.to_vec(),
        None => vec![0.0; nodes],
    };
    let mut policy = vec![0usize; nodes];
    let mut prev_policy = vec![usize::MAX; nodes];
    // centre the unknown around the constant part of the first policy
    op.residual(lambda, 0.0, &w, &mut policy);
    let mean_c = (0..nodes).map(|idx| op.cst[policy[idx] * nodes + idx]).sum::<f64>() / nodes as f64;
    let mut kappa = -mean_c / lambda;
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_NEWTON {
        let previous = residual;
        residual = op.residual(lambda, kappa, &w, &mut policy);
        if residual <= CELL_TOL {
            return Ok(CorrectorLevel { lambda, offset: kappa, w, residual, newton_iterations: it });
        }
        if policy == prev_policy && it > 1 && residual > 0.5 * previous {
            // the linear solve for this policy was exact; only roundoff is left
            break;
        }
        op.solve_policy(lambda, kappa, &policy, &mut w)?;
        // move the constant mode into the offset so difference quotients see O(1) values
        let shift = w.iter().sum::<f64>() / nodes as f64;
        kappa += shift;
        for wi in w.iter_mut() {
            *wi -= shift;
        }
        core::mem::swap(&mut policy, &mut prev_policy);
    }
    Err(CellError::Stalled { residual })
}

/// Discounted corrector `v_lambda` on the cell grid.
pub fn solve_approx_corrector(
    spec: &SystemSpec,
    inst: &CellProblemInstance,
    lambda: f64,
    grid: SpaceGrid,
) -> Result<CorrectorLevel, CellError> {
    let op = CellOperator::new(spec, inst, grid)?;
    solve_level(&op, lambda, None)
}

/// Re-substitution residual `max |lambda v + H^h(v)|` of a corrector level,
/// evaluated from scratch.
pub fn corrector_residual(spec: &SystemSpec, inst: &CellProblemInstance, grid: SpaceGrid, level: &CorrectorLevel) -> Result<f64, CellError> {
    let op = CellOperator::new(spec, inst, grid)?;
    let mut policy = vec![0; grid.len()];
    Ok(op.residual(level.lambda, level.offset, &level.w, &mut policy))
}

/// Neville evaluation at zero of the interpolant through `(xs, ys)`.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (xs[i + k] * p[i] - xs[i] * p[i + 1]) / (xs[i + k] - xs[i]);
        }
    }
    p[0]
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorSolution {
    pub component: usize,
    pub schedule: Vec<f64>,
    pub levels: Vec<CorrectorLevel>,
    /// Extrapolated ergodic constant.
    pub h_bar: f64,
    /// `v_lambdamin - v_lambdamin(0)`.
    pub corrector: GridFunction,
    /// `lambda * osc(v_lambda)` per level.
    pub spreads: Vec<f64>,
    /// `-lambda * mean(v_lambda)` per level.
    pub estimates: Vec<f64>,
}

/// Spreads at or below this level count as already converged.
const SPREAD_FLOOR: f64 = 1e-12;

pub fn validate_schedule(schedule: &[f64]) -> Result<(), CellError> {
    if schedule.len() < 3 || schedule.iter().any(|l| !(*l > 0.0) || !l.is_finite()) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CellError::BadSchedule);
    }
    Ok(())
}

/// Ergodic constant by extrapolating `-lambda mean(v_lambda)` to `lambda = 0`.
pub fn effective_hamiltonian(
    spec: &SystemSpec,
    inst: &CellProblemInstance,
    schedule: &[f64],
    grid: SpaceGrid,
) -> Result<CorrectorSolution, CellError> {
    validate_schedule(schedule)?;
    let op = CellOperator::new(spec, inst, grid)?;
    let mut levels: Vec<CorrectorLevel> = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let warm = levels.last().map(|l| l.w.as_slice());
        levels.push(solve_level(&op, lambda, warm)?);
    }
    let spreads: Vec<f64> = levels.iter().map(CorrectorLevel::spread).collect();
    if spreads.windows(2).any(|s| s[1] >= s[0] && s[0] > SPREAD_FLOOR) {
        return Err(CellError::NoErgodicLimit { spreads });
    }
    let estimates: Vec<f64> = levels.iter().map(CorrectorLevel::ergodic_estimate).collect();
    let h_bar = extrapolate_to_zero(schedule, &estimates);
    let last = levels.last().expect("schedule is non-empty");
    let w0 = last.w[0];
    let corrector = GridFunction::from_values(grid, 0.0, vec![last.w.iter().map(|w| w - w0).collect()])
        .map_err(|_| CellError::Stalled { residual: f64::NAN })?;
    Ok(CorrectorSolution {
        component: inst.component,
        schedule: schedule.to_vec(),
        levels,
        h_bar,
        corrector,
        spreads,
        estimates,
    })
}

/// Periodic density solving the discrete adjoint stationarity equation.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantMeasure {
    pub x: Point,
    pub grid: SpaceGrid,
    /// Nodal density with `sum density * h^dim = 1`.
    pub density: Vec<f64>,
    pub iterations: usize,
    /// Sup change of the last power-iteration step (on the normalized density).
    pub last_change: f64,
}

/// Stopping threshold on the power-iteration step change.
pub const MEASURE_STEP_TOL: f64 = 1e-13;
/// Required fixed-point accuracy of a returned measure.
pub const MEASURE_TOL: f64 = 1e-10;

/// Diffusion diagonal of component `i` at the cell nodes, requiring a
/// control-independent diffusion.
fn linear_diffusion(spec: &SystemSpec, i: usize, x: &Point, grid: SpaceGrid) -> Result<Vec<[[f64; 2]; 2]>, CellError> {
    if i >= spec.m {
        return Err(ScenarioError::IndexOutOfRange("component").into());
    }
    if grid.dim() != spec.dim {
        return Err(OperatorError::DimensionMismatch("cell grid").into());
    }
    if !spec.diffusion_is_control_free(i) {
        return Err(CellError::NotLinear(i));
    }
    if !(spec.constants.nu > 0.0) {
        return Err(CellError::NotElliptic);
    }
    let br = spec.branch(i, 0, 0);
    Ok((0..grid.len()).map(|idx| sample_branch(br, spec.dim, 0.0, x, &grid.coords(idx)).diffusion).collect())
}

/// One adjoint step `mu + tau * sum_k D2_k (A_kk mu)` into `out`.
fn adjoint_step(grid: &SpaceGrid, a: &[[f64; 2]], mu: &[f64], tau_h2: f64, flux: &mut [f64], out: &mut [f64]) -> f64 {
    let nodes = grid.len();
    out.copy_from_slice(mu);
    for k in 0..grid.dim() {
        for idx in 0..nodes {
            flux[idx] = a[idx][k] * mu[idx];
        }
        for idx in 0..nodes {
            let c = flux[idx];
            out[idx] += tau_h2 * ((flux[grid.neighbor(idx, k, 1)] - c) + (flux[grid.neighbor(idx, k, -1)] - c));
        }
    }
    out.iter().zip(mu).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
}

/// Invariant measure of the frozen diffusion of component `i` at `x`, by
/// power iteration on `I + tau (L^h)^T` from the uniform density.
pub fn invariant_measure(spec: &SystemSpec, i: usize, x: &Point, grid: SpaceGrid) -> Result<InvariantMeasure, CellError> {
    let full = linear_diffusion(spec, i, x, grid)?;
    if spec.dim == 2 && full.iter().any(|a| a[0][1].abs() > 1e-14 * (a[0][0] + a[1][1]).max(1.0)) {
        return Err(OperatorError::CrossDiffusion.into());
    }
    let a: Vec<[f64; 2]> = full.iter().map(|a| [a[0][0], a[1][1]]).collect();
    let nodes = grid.len();
    let a_max = a.iter().flat_map(|v| v[..grid.dim()].iter().copied()).fold(0.0, f64::max);
    let a_min = a.iter().flat_map(|v| v[..grid.dim()].iter().copied()).fold(f64::INFINITY, f64::min);
    // tau = h^2 / (4 dim A_max); D2 carries 1/h^2
    let tau_h2 = 1.0 / (4.0 * grid.dim() as f64 * a_max);
    let h2 = grid.h() * grid.h();
    // slowest mode decays like exp(-tau 4 pi^2 a_min k); budget 40 e-folds past 1e-13
    let rate = tau_h2 * h2 * 4.0 * core::f64::consts::PI * core::f64::consts::PI * a_min.max(1e-300);
    let budget = (80.0 / rate) as usize + 1000;
    let mut mu = vec![1.0; nodes];
    let mut next = vec![0.0; nodes];
    let mut flux = vec![0.0; nodes];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < budget {
        change = adjoint_step(&grid, &a, &mu, tau_h2, &mut flux, &mut next);
        core::mem::swap(&mut mu, &mut next);
        iterations += 1;
        if change <= MEASURE_STEP_TOL {
            break;
        }
    }
    let cell = if grid.dim() == 1 { grid.h() } else { h2 };
    let mass: f64 = mu.iter().sum::<f64>() * cell;
    for v in &mut mu {
        *v /= mass;
    }
    let last_change = adjoint_step(&grid, &a, &mu, tau_h2, &mut flux, &mut next);
    if !(last_change <= MEASURE_TOL) || mu.iter().any(|v| *v < 0.0) {
        return Err(CellError::MeasureStalled { residual: change });
    }
    Ok(InvariantMeasure { x: *x, grid, density: mu, iterations, last_change })
}

/// Change of one more adjoint power step applied to `measure`.
pub fn measure_fixed_point_defect(spec: &SystemSpec, i: usize, measure: &InvariantMeasure) -> Result<f64, CellError> {
    let grid = measure.grid;
    let full = linear_diffusion(spec, i, &measure.x, grid)?;
    let a: Vec<[f64; 2]> = full.iter().map(|a| [a[0][0], a[1][1]]).collect();
    let a_max = a.iter().flat_map(|v| v[..grid.dim()].iter().copied()).fold(0.0, f64::max);
    let tau_h2 = 1.0 / (4.0 * grid.dim() as f64 * a_max);
    let mut next = vec![0.0; grid.len()];
    let mut flux = vec![0.0; grid.len()];
    Ok(adjoint_step(&grid, &a, &measure.density, tau_h2, &mut flux, &mut next))
}

/// Lower-order data of one branch at one cell node, weighted by the measure.
#[derive(Clone, Debug, PartialEq)]
struct WeightedBranch {
    drift: [f64; 2],
    cost: f64,
    grad: f64,
    coupling: Vec<f64>,
}

impl WeightedBranch {
    fn value(&self, dim: usize, r: &[f64], p: &[f64; 2]) -> f64 {
        let mut v = self.cost;
        for k in 0..dim {
            v += self.drift[k] * p[k];
        }
        if self.grad != 0.0 {
            v += self.grad * crate::scenario::norm2(p, dim);
        }
        for (d, rj) in self.coupling.iter().zip(r) {
            v += d * rj;
        }
        v
    }
}

/// Effective data of one component at one slow point.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentEffective {
    pub component: usize,
    pub abar: [[f64; 2]; 2],
    pub measure: InvariantMeasure,
    nt: usize,
    nz: usize,
    weights: Vec<f64>,
    /// `branch * nodes + node`.
    branches: Vec<WeightedBranch>,
    /// Measure average of the single branch when there is only one.
    averaged: Option<WeightedBranch>,
}

impl ComponentEffective {
    /// `Fbar(x, r, p)`, the measure average of the min-max lower-order part.
    pub fn fbar(&self, dim: usize, r: &[f64], p: &[f64; 2]) -> f64 {
        if let Some(avg) = &self.averaged {
            return avg.value(dim, r, p);
        }
        let nodes = self.weights.len();
        let mut acc = 0.0;
        for (idx, w) in self.weights.iter().enumerate() {
            let v = crate::operator::min_max(self.nt, self.nz, |th, z| self.branches[(th * self.nz + z) * nodes + idx].value(dim, r, p));
            acc += w * v;
        }
        acc
    }

    /// Averaged single-branch coefficients `(bbar, lbar, qbar, dbar)` when available.
    pub fn averaged_branch(&self) -> Option<([f64; 2], f64, f64, &[f64])> {
        self.averaged.as_ref().map(|a| (a.drift, a.cost, a.grad, a.coupling.as_slice()))
    }

    /// `Hbar(x, r, p, X) = -tr(abar X) + Fbar(x, r, p)`.
    pub fn hbar(&self, dim: usize, r: &[f64], p: &[f64; 2], xmat: &[[f64; 2]; 2]) -> f64 {
        let mut tr = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                tr += self.abar[a][b] * xmat[b][a];
            }
        }
        -tr + self.fbar(dim, r, p)
    }

    /// Monotone discretization of `Hbar_i` at a grid node: second differences
    /// against the diagonal of `abar`, upwinded drifts and the Godunov gradient
    /// norm inside every averaged branch.
    pub(crate) fn scheme_value(&self, st: &Stencil, u: &[Vec<f64>], idx: usize) -> f64 {
        let diffusion = -st.diffusion(&[self.abar[0][0], self.abar[1][1]]);
        let value = |b: &WeightedBranch| {
            let nb = NodeBranch { diag: [0.0; 2], drift: b.drift, cost: b.cost, grad: b.grad };
            branch_value(&nb, &b.coupling, st, u, idx)
        };
        if let Some(avg) = &self.averaged {
            return diffusion + value(avg);
        }
        let nodes = self.weights.len();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w * crate::operator::min_max(self.nt, self.nz, |th, z| value(&self.branches[(th * self.nz + z) * nodes + k]));
        }
        diffusion + acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveCoefficients {
    pub x: Point,
    pub dim: usize,
    pub components: Vec<ComponentEffective>,
}

/// Effective diffusion `abar = sum A mu h^n` and averaged lower-order part
/// for scenarios whose diffusion does not depend on the controls.
pub fn effective_linear_coeffs(spec: &SystemSpec, x: &Point, grid: SpaceGrid) -> Result<EffectiveCoefficients, CellError> {
    let (nt, nz) = spec.controls.sizes();
    let nodes = grid.len();
    let cell = if grid.dim() == 1 { grid.h() } else { grid.h() * grid.h() };
    let mut components = Vec::with_capacity(spec.m);
    for i in 0..spec.m {
        let measure = invariant_measure(spec, i, x, grid)?;
        let weights: Vec<f64> = measure.density.iter().map(|m| m * cell).collect();
        let diffusion = linear_diffusion(spec, i, x, grid)?;
        let mut abar = [[0.0; 2]; 2];
        for (idx, a) in diffusion.iter().enumerate() {
            for r in 0..spec.dim {
                for c in 0..spec.dim {
                    abar[r][c] += a[r][c] * weights[idx];
                }
            }
        }
        let mut branches = Vec::with_capacity(nt * nz * nodes);
        for th in 0..nt {
            for z in 0..nz {
                let br = spec.branch(i, th, z);
                for idx in 0..nodes {
                    let s = sample_branch(br, spec.dim, 0.0, x, &grid.coords(idx));
                    branches.push(WeightedBranch { drift: s.drift, cost: s.running_cost, grad: s.grad_norm, coupling: s.coupling });
                }
            }
        }
        let averaged = (nt * nz == 1).then(|| {
            let mut avg = WeightedBranch { drift: [0.0; 2], cost: 0.0, grad: 0.0, coupling: vec![0.0; spec.m] };
            for (b, w) in branches.iter().zip(&weights) {
                for k in 0..2 {
                    avg.drift[k] += w * b.drift[k];
                }
                avg.cost += w * b.cost;
                avg.grad += w * b.grad;
                for (a, d) in avg.coupling.iter_mut().zip(&b.coupling) {
                    *a += w * d;
                }
            }
            avg
        });
        components.push(ComponentEffective { component: i, abar, measure, nt, nz, weights, branches, averaged });
    }
    Ok(EffectiveCoefficients { x: *x, dim: spec.dim, components })
}

/// Findings of [`check_effective_properties`].
#[derive(Clone, Debug, PartialEq)]
pub struct EffectivePropertiesReport {
    pub samples: usize,
    pub linear_path: bool,
    /// Structural Lipschitz constant inherited from the coefficients.
    pub c1: f64,
    /// Largest sampled difference quotient.
    pub fitted_c1: f64,
    pub lipschitz_violations: usize,
    /// Smallest sampled `(Hbar(X) - Hbar(X + sI)) / (s n)`.
    pub nu_bar: f64,
    pub ellipticity_violations: usize,
    pub quasi_monotone_violations: usize,
    /// `None` unless the scenario has a trivial `zeta` set.
    pub convexity_violations: Option<usize>,
    pub pass: bool,
}

/// Evaluates `Hbar` either through invariant measures or through cell solves.
pub struct EffectiveEvaluator<'a> {
    spec: &'a SystemSpec,
    grid: SpaceGrid,
    schedule: Vec<f64>,
    linear: bool,
    lattice: usize,
    cache: Vec<Option<EffectiveCoefficients>>,
}

impl<'a> EffectiveEvaluator<'a> {
    /// Slow points are restricted to a lattice of `lattice^dim` nodes so that
    /// invariant measures can be reused.
    pub fn new(spec: &'a SystemSpec, grid: SpaceGrid, schedule: &[f64], lattice: usize) -> Result<Self, CellError> {
        validate_schedule(schedule)?;
        if !(spec.constants.nu > 0.0) {
            return Err(CellError::NotElliptic);
        }
        let linear = (0..spec.m).all(|i| spec.diffusion_is_control_free(i));
        let slots = if spec.dim == 1 { lattice } else { lattice * lattice };
        Ok(Self { spec, grid, schedule: schedule.to_vec(), linear, lattice, cache: vec![None; slots] })
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn lattice_point(&self, k: usize) -> Point {
        let n = self.lattice;
        [(k % n) as f64 / n as f64, (k / n) as f64 / n as f64]
    }

    pub fn lattice_len(&self) -> usize {
        self.cache.len()
    }

    /// `Hbar_i` at lattice slow point `k`.
    pub fn eval(&mut self, k: usize, i: usize, r: &[f64], p: &[f64; 2], xmat: &[[f64; 2]; 2]) -> Result<f64, CellError> {
        // x-independent coefficients share one slow point
        let k = if self.spec.depends_on_x() { k } else { 0 };
        let x = self.lattice_point(k);
        if self.linear {
            if self.cache[k].is_none() {
                self.cache[k] = Some(effective_linear_coeffs(self.spec, &x, self.grid)?);
            }
            let eff = self.cache[k].as_ref().expect("filled above");
            return Ok(eff.components[i].hbar(self.spec.dim, r, p, xmat));
        }
        let inst = CellProblemInstance::new(i, x, r.to_vec(), *p, *xmat);
        Ok(effective_hamiltonian(self.spec, &inst, &self.schedule, self.grid)?.h_bar)
    }
}

/// Structural Lipschitz constant of `H` in `(r, p, X)` with the max norm on
/// `r`, Euclidean norm on `p` and Frobenius norm on `X`.
pub fn structural_lipschitz(spec: &SystemSpec) -> f64 {
    let dim = spec.dim;
    let mut c: f64 = 0.0;
    for br in &spec.coefficients {
        let cr: f64 = br.d.iter().map(|f| f.sup_bound()).sum();
        let bsq: f64 = br.b.iter().map(|f| f.sup_bound() * f.sup_bound()).sum();
        let cp = libm::sqrt(bsq) + br.q.sup_bound();
        let mut frob = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                let e: f64 = (0..dim).map(|l| br.a[a * dim + l].sup_bound() * br.a[b * dim + l].sup_bound()).sum();
                frob += e * e;
            }
        }
        c = c.max(cr).max(cp).max(libm::sqrt(frob));
    }
    c
}

struct Probe {
    r: Vec<f64>,
    p: [f64; 2],
    x: [[f64; 2]; 2],
}

fn random_probe(rng: &mut SampleRng, m: usize, dim: usize) -> Probe {
    let r = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut p = [0.0; 2];
    let mut x = [[0.0; 2]; 2];
    for k in 0..dim {
        p[k] = rng.uniform(-1.0, 1.0);
    }
    for a in 0..dim {
        for b in a..dim {
            let v = rng.uniform(-1.0, 1.0);
            x[a][b] = v;
            x[b][a] = v;
        }
    }
    Probe { r, p, x }
}

fn probe_distance(a: &Probe, b: &Probe, dim: usize) -> f64 {
    let dr = a.r.iter().zip(&b.r).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
    let dp = libm::hypot(a.p[0] - b.p[0], if dim == 2 { a.p[1] - b.p[1] } else { 0.0 });
    let mut dx = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            let e = a.x[r][c] - b.x[r][c];
            dx += e * e;
        }
    }
    dr + dp + libm::sqrt(dx)
}

/// Sampled checks of continuity, ellipticity, quasi-monotonicity and (for a
/// trivial `zeta` set) convexity of the effective Hamiltonian.
///
/// Each of the `budget` samples draws a lattice slow point, a component and
/// random `(r, p, X)` arguments in `[-1, 1]`, then runs all checks on them.
pub fn check_effective_properties(
    spec: &SystemSpec,
    budget: usize,
    seed: u64,
    grid: SpaceGrid,
    schedule: &[f64],
) -> Result<EffectivePropertiesReport, CellError> {
    let mut eval = EffectiveEvaluator::new(spec, grid, schedule, 8)?;
    let linear = eval.is_linear();
    // exact averaging on the linear path; extrapolation error on the cell path
    let tol = if linear { 1e-9 } else { 1e-5 };
    let c1 = structural_lipschitz(spec);
    let dim = spec.dim;
    let m = spec.m;
    let convex = spec.has_trivial_zeta();
    let mut rng = SampleRng::new(seed);
    let mut rep = EffectivePropertiesReport {
        samples: budget,
        linear_path: linear,
        c1,
        fitted_c1: 0.0,
        lipschitz_violations: 0,
        nu_bar: f64::INFINITY,
        ellipticity_violations: 0,
        quasi_monotone_violations: 0,
        convexity_violations: convex.then_some(0),
        pass: true,
    };
    let patterns = sign_patterns(m);
    for n in 0..budget {
        let k = rng.index(eval.lattice_len());
        let i = rng.index(m);
        let a = random_probe(&mut rng, m, dim);
        let b = random_probe(&mut rng, m, dim);
        let ha = eval.eval(k, i, &a.r, &a.p, &a.x)?;
        let hb = eval.eval(k, i, &b.r, &b.p, &b.x)?;
        let dist = probe_distance(&a, &b, dim);
        if dist > 0.0 {
            let q = (ha - hb).abs() / dist;
            rep.fitted_c1 = rep.fitted_c1.max(q);
            if (ha - hb).abs() > c1 * dist + tol {
                rep.lipschitz_violations += 1;
            }
        }
        // ellipticity: Hbar(X + sI) <= Hbar(X) - nu s n
        let s = rng.uniform(0.0, 1.0);
        let mut xs = a.x;
        for d in 0..dim {
            xs[d][d] += s;
        }
        let hs = eval.eval(k, i, &a.r, &a.p, &xs)?;
        if s > 0.0 {
            rep.nu_bar = rep.nu_bar.min((ha - hs) / (s * dim as f64));
        }
        if hs > ha - spec.constants.nu * s * dim as f64 + tol {
            rep.ellipticity_violations += 1;
        }
        // quasi-monotonicity along a sign pattern (exhaustive first) or a random shift
        let (delta, j) = if n < patterns.len() {
            patterns[n].clone()
        } else {
            random_shift(&mut rng, m)
        };
        let r_hi: Vec<f64> = a.r.iter().zip(&delta).map(|(x, d)| x + d).collect();
        let h_hi = eval.eval(k, j, &r_hi, &a.p, &a.x)?;
        let h_lo = eval.eval(k, j, &a.r, &a.p, &a.x)?;
        if h_hi - h_lo < spec.gamma * delta[j] - tol {
            rep.quasi_monotone_violations += 1;
        }
        if convex {
            let mid = Probe {
                r: a.r.iter().zip(&b.r).map(|(x, y)| 0.5 * (x + y)).collect(),
                p: [0.5 * (a.p[0] + b.p[0]), 0.5 * (a.p[1] + b.p[1])],
                x: [
                    [0.5 * (a.x[0][0] + b.x[0][0]), 0.5 * (a.x[0][1] + b.x[0][1])],
                    [0.5 * (a.x[1][0] + b.x[1][0]), 0.5 * (a.x[1][1] + b.x[1][1])],
                ],
            };
            let hm = eval.eval(k, i, &mid.r, &mid.p, &mid.x)?;
            if hm > 0.5 * (ha + hb) + tol {
                *rep.convexity_violations.as_mut().expect("set when convex") += 1;
            }
        }
    }
    if budget == 0 {
        rep.nu_bar = 0.0;
    }
    rep.pass = rep.lipschitz_violations == 0
        && rep.ellipticity_violations == 0
        && rep.quasi_monotone_violations == 0
        && rep.convexity_violations.unwrap_or(0) == 0;
    Ok(rep)
}

/// Shifts `delta in {-1, 0, 1}^m` whose maximum `delta_j >= 0` is attained at
/// `j` (first maximizer), for `m <= 4`.
fn sign_patterns(m: usize) -> Vec<(Vec<f64>, usize)> {
    if m > 4 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let delta: Vec<f64> = (0..m)
            .map(|_| {
                let v = (c % 3) as f64 - 1.0;
                c /= 3;
                v
            })
            .collect();
        let max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max < 0.0 {
            continue;
        }
        for j in 0..m {
            if delta[j] == max {
                out.push((delta.clone(), j));
            }
        }
    }
    out
}

fn random_shift(rng: &mut SampleRng, m: usize) -> (Vec<f64>, usize) {
    let j = rng.index(m);
    let top = rng.uniform(0.0, 1.0);
    let delta = (0..m).map(|k| if k == j { top } else { rng.uniform(-1.0, top) }).collect();
    (delta, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_catalog_scenario;
    use core::f64::consts::TAU;

    fn cell1(n: usize) -> SpaceGrid {
        SpaceGrid::new(1, n).unwrap()
    }

    #[test]
    fn cyclic_schedule_validation() {
        assert!(validate_schedule(&DEFAULT_SCHEDULE).is_ok());
        assert_eq!(validate_schedule(&[0.1, 0.05]), Err(CellError::BadSchedule));
        assert_eq!(validate_schedule(&[0.1, 0.1, 0.05]), Err(CellError::BadSchedule));
    }

    #[test]
    fn neville_reproduces_quadratics() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x + 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn y_independent_cell_is_constant() {
        let spec = build_catalog_scenario("heat_1d").unwrap();
        let inst = CellProblemInstance::scalar(0.3, 0.0, 0.7, -2.0);
        let h = 2.0; // -A X with A = 1
        let lvl = solve_approx_corrector(&spec, &inst, 0.1, cell1(32)).unwrap();
        for v in lvl.values() {
            assert!((v + h / 0.1).abs() < 1e-12);
        }
        let sol = effective_hamiltonian(&spec, &inst, &DEFAULT_SCHEDULE, cell1(32)).unwrap();
        assert!((sol.h_bar - h).abs() < 1e-13);
        assert!(sol.corrector.sup_norm() < 1e-15);
    }

    #[test]
    fn hom_linear_corrector_residual_and_shape() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let inst = CellProblemInstance::scalar(0.0, 0.0, 0.0, -1.0);
        let g = cell1(128);
        let lvl = solve_approx_corrector(&spec, &inst, 0.05, g).unwrap();
        assert!(lvl.residual <= CELL_TOL);
        assert!(corrector_residual(&spec, &inst, g, &lvl).unwrap() <= CELL_TOL);
        assert!(lvl.spread() > 1e-4);
    }

    #[test]
    fn hom_linear_ergodic_constant_is_harmonic_mean() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let inst = CellProblemInstance::scalar(0.0, 0.0, 0.0, -1.0);
        let sol = effective_hamiltonian(&spec, &inst, &DEFAULT_SCHEDULE, cell1(128)).unwrap();
        assert!((sol.h_bar - 3f64.sqrt()).abs() < 1e-3, "{}", sol.h_bar);
        assert!(sol.spreads.windows(2).all(|w| w[1] < w[0]));
        // first-order approach: halving lambda roughly halves the distance to the limit
        let d: Vec<f64> = sol.estimates.iter().map(|e| (e - sol.h_bar).abs()).collect();
        assert!(d[1] / d[0] > 0.35 && d[1] / d[0] < 0.65, "{d:?}");
        assert!(d[2] / d[1] > 0.35 && d[2] / d[1] < 0.65, "{d:?}");
    }

    #[test]
    fn linear_cell_is_linear_in_x() {
        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let g = cell1(64);
        let hb = |xx: f64| effective_hamiltonian(&spec, &CellProblemInstance::scalar(0.0, 0.0, 0.0, xx), &DEFAULT_SCHEDULE, g).unwrap().h_bar;
        let (a, b) = (-0.7, 1.9);
        assert!((hb(a + b) - hb(a) - hb(b)).abs() < 1e-6);
    }

    #[test]
    fn measure_oracles() {
        let heat = build_catalog_scenario("heat_1d").unwrap();
        let uni = invariant_measure(&heat, 0, &[0.0, 0.0], cell1(32)).unwrap();
        assert!(uni.density.iter().all(|m| (m - 1.0).abs() < 1e-14));

        let spec = build_catalog_scenario("hom_linear_1d").unwrap();
        let g = cell1(256);
        let mu = invariant_measure(&spec, 0, &[0.0, 0.0], g).unwrap();
        for (idx, m) in mu.density.iter().enumerate() {
            let y = g.coords(idx)[0];
            let exact = 3f64.sqrt() / (2.0 + libm::sin(TAU * y));
            assert!((m - exact).abs() < 1e-3);
        }
        assert!(measure_fixed_point_defect(&spec, 0, &mu).unwrap() <= MEASURE_TOL);
        let eff = effective_linear_coeffs(&spec, &[0.0, 0.0], g).unwrap();
        assert!((eff.components[0].abar[0][0] - 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn averaging_preserves_zero_row_sums() {
        let spec = build_catalog_scenario("coupled_switch_2sys").unwrap();
        let eff = effective_linear_coeffs(&spec, &[0.3, 0.0], cell1(16)).unwrap();
        for c in &eff.components {
            let (_, _, _, d) = c.averaged_branch().unwrap();
            assert!(d.iter().sum::<f64>().abs() < 1e-15);
            assert_eq!(c.abar[0][0], 0.25);
        }
    }

    #[test]
    fn degenerate_scenarios_are_refused() {
        let spec = build_catalog_scenario("firstorder_2sys").unwrap();
        let inst = CellProblemInstance::new(0, [0.0; 2], vec![0.0, 0.0], [0.0; 2], [[0.0; 2]; 2]);
        assert_eq!(solve_approx_corrector(&spec, &inst, 0.1, cell1(16)), Err(CellError::NotElliptic));
    }

    #[test]
    fn sign_patterns_cover_m2() {
        let p = sign_patterns(2);
        assert!(p.iter().any(|(d, j)| d == &vec![1.0, 0.0] && *j == 0));
        assert!(p.iter().all(|(d, j)| d[*j] >= 0.0 && d.iter().all(|v| *v <= d[*j])));
    }
}
