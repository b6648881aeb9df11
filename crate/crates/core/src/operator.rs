//! Pointwise min-max Hamiltonians and their monotone finite-difference
//! discretization on the periodic grid.
//!
//! The discrete operator at a node is
//!
//! ```text
//! min_zeta max_theta { -sum_k A_kk D2_k u_i + sum_k b_k Dup_k u_i + l + sum_j d_ij u_j + q |D u_i|_G }
//!     - eps_visc * Lap_h u_i
//! ```
//!
//! with `Dup_k` the backward difference where `b_k > 0` and the forward one
//! otherwise, and `|.|_G` the Godunov approximation of the gradient norm.

use crate::grid::{GridFunction, SpaceGrid};
use crate::scenario::{eval_coefficients, sample_branch, Point, ScenarioError, SystemSpec};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("matrix argument is not symmetric")]
    AsymmetricMatrix,
    #[error("unsupported cross-diffusion")]
    CrossDiffusion,
    #[error("fast-scale grid incommensurate: 1/eps = {k} does not divide N = {n}")]
    Incommensurate { n: usize, k: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Knobs of the explicit monotone scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiscreteOperatorConfig {
    /// Artificial viscosity `eps` in `-eps * Lap u`, kept outside the min-max.
    pub eps_visc: f64,
    /// Optional cap on the time step, below the CFL step.
    pub max_dt: Option<f64>,
}

impl DiscreteOperatorConfig {
    pub fn with_viscosity(eps_visc: f64) -> Self {
        Self { eps_visc, ..Self::default() }
    }
}

/// Oscillation scale `eps = 1/k` of the fast variable `y = x/eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FastScale(usize);

impl FastScale {
    /// # Panics
    /// Panics on `k == 0`.
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "fast scale needs a positive integer 1/eps");
        Self(k)
    }

    pub fn k(&self) -> usize {
        self.0
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.0 as f64
    }

    /// Fast variable `k x mod 1` at a node, exact on commensurate grids.
    pub fn fast_point(&self, grid: &SpaceGrid, idx: usize) -> Point {
        let n = grid.n();
        let m = grid.multi_index(idx);
        [((m[0] * self.0) % n) as f64 / n as f64, ((m[1] * self.0) % n) as f64 / n as f64]
    }

    pub fn check(&self, grid: &SpaceGrid) -> Result<(), OperatorError> {
        if grid.n() % self.0 != 0 {
            return Err(OperatorError::Incommensurate { n: grid.n(), k: self.0 });
        }
        Ok(())
    }
}

/// `min over zeta of max over theta`, branches in canonical order.
#[inline]
pub(crate) fn min_max(nt: usize, nz: usize, mut value: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut lo = f64::INFINITY;
    for z in 0..nz {
        let mut hi = f64::NEG_INFINITY;
        for th in 0..nt {
            hi = hi.max(value(th, z));
        }
        lo = lo.min(hi);
    }
    lo
}

/// Pointwise `H_i(t, x, r, p, X)` with `X` given row-major.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_pointwise(
    spec: &SystemSpec,
    i: usize,
    t: f64,
    x: &Point,
    r: &[f64],
    p: &[f64],
    xmat: &[f64],
    y: Option<&Point>,
) -> Result<f64, OperatorError> {
    let dim = spec.dim;
    if r.len() != spec.m {
        return Err(OperatorError::DimensionMismatch("r"));
    }
    if p.len() != dim {
        return Err(OperatorError::DimensionMismatch("p"));
    }
    if xmat.len() != dim * dim {
        return Err(OperatorError::DimensionMismatch("X"));
    }
    if dim == 2 && xmat[1] != xmat[2] {
        return Err(OperatorError::AsymmetricMatrix);
    }
    let mut pp = [0.0; 2];
    pp[..dim].copy_from_slice(p);
    let mut xx = [[0.0; 2]; 2];
    for a in 0..dim {
        for b in 0..dim {
            xx[a][b] = xmat[a * dim + b];
        }
    }
    let (nt, nz) = spec.controls.sizes();
    let mut err = None;
    let v = min_max(nt, nz, |th, z| match eval_coefficients(spec, i, th, z, t, x, y) {
        Ok(s) => -s.trace_ax(&xx) + s.lower_order(r, &pp),
        Err(e) => {
            err = Some(e);
            f64::NAN
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

/// One-sided and second differences of one component at one node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub dim: usize,
    /// Backward differences `(u_c - u_-)/h`.
    pub dm: [f64; 2],
    /// Forward differences `(u_+ - u_c)/h`.
    pub dp: [f64; 2],
    /// Second differences, accumulated as `((u_+ - u_c) + (u_- - u_c))/h^2`.
    pub d2: [f64; 2],
}

impl Stencil {
    #[inline]
    pub fn at(grid: &SpaceGrid, u: &[f64], idx: usize) -> Self {
        let h = grid.h();
        let inv_h = grid.n() as f64;
        let uc = u[idx];
        let mut s = Stencil { dim: grid.dim(), dm: [0.0; 2], dp: [0.0; 2], d2: [0.0; 2] };
        for k in 0..grid.dim() {
            let um = u[grid.neighbor(idx, k, -1)];
            let up = u[grid.neighbor(idx, k, 1)];
            let fwd = up - uc;
            let bwd = um - uc;
            s.dm[k] = -bwd * inv_h;
            s.dp[k] = fwd * inv_h;
            s.d2[k] = (fwd + bwd) / (h * h);
        }
        s
    }

    #[inline]
    pub fn upwind(&self, b: &[f64; 2]) -> f64 {
        let mut v = 0.0;
        for k in 0..self.dim {
            v += if b[k] > 0.0 { b[k] * self.dm[k] } else { b[k] * self.dp[k] };
        }
        v
    }

    /// Godunov approximation of `|Du|`, nonincreasing in every neighbour.
    #[inline]
    pub fn godunov_norm(&self) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let g = self.dm[k].max(-self.dp[k]).max(0.0);
            s += g * g;
        }
        libm::sqrt(s)
    }

    #[inline]
    pub fn laplacian(&self) -> f64 {
        self.d2[..self.dim].iter().sum()
    }

    #[inline]
    pub fn diffusion(&self, diag: &[f64; 2]) -> f64 {
        let mut v = 0.0;
        for k in 0..self.dim {
            v += diag[k] * self.d2[k];
        }
        v
    }
}

/// Branch coefficients frozen at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct NodeBranch {
    pub diag: [f64; 2],
    pub drift: [f64; 2],
    pub cost: f64,
    pub grad: f64,
}

/// Affine branch value at a node; `coupling` is the row `d_i.`.
#[inline]
pub(crate) fn branch_value(nb: &NodeBranch, coupling: &[f64], st: &Stencil, u: &[Vec<f64>], idx: usize) -> f64 {
    let mut v = nb.cost - st.diffusion(&nb.diag) + st.upwind(&nb.drift);
    if nb.grad != 0.0 {
        v += nb.grad * st.godunov_norm();
    }
    for (d, uj) in coupling.iter().zip(u) {
        v += d * uj[idx];
    }
    v
}

fn node_branch(spec: &SystemSpec, i: usize, th: usize, z: usize, t: f64, x: &Point, y: &Point) -> Result<(NodeBranch, Vec<f64>), OperatorError> {
    let s = sample_branch(spec.branch(i, th, z), spec.dim, t, x, y);
    if spec.dim == 2 {
        let scale = s.diffusion[0][0].abs() + s.diffusion[1][1].abs();
        if s.diffusion[0][1].abs() > 1e-14 * scale.max(1.0) {
            return Err(OperatorError::CrossDiffusion);
        }
    }
    Ok((
        NodeBranch {
            diag: [s.diffusion[0][0], s.diffusion[1][1]],
            drift: s.drift,
            cost: s.running_cost,
            grad: s.grad_norm,
        },
        s.coupling,
    ))
}

/// Coefficients of every branch sampled at every node of a grid.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    grid: SpaceGrid,
    m: usize,
    nt: usize,
    nz: usize,
    fast: Option<FastScale>,
    t: f64,
    branches: Vec<NodeBranch>,
    coupling: Vec<f64>,
}

impl CoefficientTable {
    /// Samples all branches at time `t`. Specs with a fast variable need a
    /// [`FastScale`]; specs without one must not be given one.
    pub fn build(spec: &SystemSpec, grid: SpaceGrid, fast: Option<FastScale>, t: f64) -> Result<Self, OperatorError> {
        if spec.dim != grid.dim() {
            return Err(OperatorError::DimensionMismatch("grid"));
        }
        match (spec.fast, fast) {
            (true, Some(f)) => f.check(&grid)?,
            (false, None) => {}
            _ => return Err(ScenarioError::FastArityMismatch.into()),
        }
        let (nt, nz) = spec.controls.sizes();
        let nodes = grid.len();
        let count = spec.branch_count();
        let mut table = Self {
            grid,
            m: spec.m,
            nt,
            nz,
            fast,
            t: f64::NAN,
            branches: vec![NodeBranch::default(); count * nodes],
            coupling: vec![0.0; count * nodes * spec.m],
        };
        table.fill(spec, t)?;
        Ok(table)
    }

    fn fill(&mut self, spec: &SystemSpec, t: f64) -> Result<(), OperatorError> {
        let nodes = self.grid.len();
        let m = self.m;
        for br in &spec.coefficients {
            let b = (br.component * self.nt + br.theta) * self.nz + br.zeta;
            for idx in 0..nodes {
                let x = self.grid.coords(idx);
                let y = match self.fast {
                    Some(f) => f.fast_point(&self.grid, idx),
                    None => [0.0; 2],
                };
                let (nb, d) = node_branch(spec, br.component, br.theta, br.zeta, t, &x, &y)?;
                self.branches[b * nodes + idx] = nb;
                self.coupling[(b * nodes + idx) * m..(b * nodes + idx + 1) * m].copy_from_slice(&d);
            }
        }
        self.t = t;
        Ok(())
    }

    /// Resamples at time `t`; a no-op when coefficients are time independent.
    pub fn refresh(&mut self, spec: &SystemSpec, t: f64) -> Result<(), OperatorError> {
        if spec.depends_on_t() && t != self.t {
            self.fill(spec, t)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    /// Discrete Hamiltonian of component `i` at node `idx`.
    #[inline]
    pub fn eval(&self, u: &[Vec<f64>], i: usize, idx: usize, eps_visc: f64) -> f64 {
        let nodes = self.grid.len();
        let m = self.m;
        let st = Stencil::at(&self.grid, &u[i], idx);
        let mut v = min_max(self.nt, self.nz, |th, z| {
            let b = ((i * self.nt + th) * self.nz + z) * nodes + idx;
            branch_value(&self.branches[b], &self.coupling[b * m..(b + 1) * m], &st, u, idx)
        });
        if eps_visc != 0.0 {
            v -= eps_visc * st.laplacian();
        }
        v
    }
}

/// Discrete Hamiltonian of component `i` at one node, sampling the
/// coefficients on the fly.
pub fn discrete_hamiltonian(
    spec: &SystemSpec,
    u: &GridFunction,
    i: usize,
    idx: usize,
    t: f64,
    config: &DiscreteOperatorConfig,
    fast: Option<FastScale>,
) -> Result<f64, OperatorError> {
    let grid = u.grid();
    if u.m() != spec.m || grid.dim() != spec.dim {
        return Err(OperatorError::DimensionMismatch("grid function"));
    }
    if i >= spec.m || idx >= grid.len() {
        return Err(ScenarioError::IndexOutOfRange("component or node").into());
    }
    let y = match (spec.fast, fast) {
        (true, Some(f)) => {
            f.check(&grid)?;
            f.fast_point(&grid, idx)
        }
        (false, None) => [0.0; 2],
        _ => return Err(ScenarioError::FastArityMismatch.into()),
    };
    let x = grid.coords(idx);
    let st = Stencil::at(&grid, u.component(i), idx);
    let (nt, nz) = spec.controls.sizes();
    let mut err = None;
    let mut v = min_max(nt, nz, |th, z| match node_branch(spec, i, th, z, t, &x, &y) {
        Ok((nb, d)) => branch_value(&nb, &d, &st, u.components(), idx),
        Err(e) => {
            err = Some(e);
            f64::NAN
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    v -= config.eps_visc * st.laplacian();
    Ok(v)
}

/// Structural maxima entering the CFL bound.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SchemeBounds {
    /// Largest diagonal diffusion entry.
    pub a_max: f64,
    /// Largest `sum_k |b_k|`.
    pub b_sum_max: f64,
    /// Largest `|p|` coefficient.
    pub q_max: f64,
    /// Largest diagonal coupling entry.
    pub d_diag_max: f64,
}

impl SchemeBounds {
    /// Guaranteed bounds from the trigonometric representation.
    pub fn of_spec(spec: &SystemSpec) -> Self {
        let dim = spec.dim;
        let mut s = Self::default();
        for br in &spec.coefficients {
            for k in 0..dim {
                let akk: f64 = (0..dim).map(|l| {
                        let s = br.a[k * dim + l].sup_bound();
                        s * s
                    }).sum();
                s.a_max = s.a_max.max(akk);
            }
            s.b_sum_max = s.b_sum_max.max(br.b.iter().map(|f| f.sup_bound()).sum());
            s.q_max = s.q_max.max(br.q.sup_bound());
            s.d_diag_max = s.d_diag_max.max(br.d[br.component].sup_bound());
        }
        s
    }

    /// Largest monotone explicit step on spacing `h`.
    pub fn timestep(&self, dim: usize, h: f64, eps_visc: f64) -> f64 {
        let denom = 2.0 * dim as f64 * (self.a_max + eps_visc)
            + h * (self.b_sum_max + self.q_max * dim as f64)
            + h * h * self.d_diag_max;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            h * h / denom
        }
    }
}

/// Largest time step for which the explicit Euler update is monotone,
/// further capped by `config.max_dt`.
pub fn cfl_timestep(spec: &SystemSpec, h: f64, config: &DiscreteOperatorConfig) -> f64 {
    let dt = SchemeBounds::of_spec(spec).timestep(spec.dim, h, config.eps_visc);
    match config.max_dt {
        Some(cap) => dt.min(cap),
        None => dt,
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::scenario::{Branch, CoefficientField, ControlSet, Form, StructuralConstants, SystemSpec};
    use alloc::string::ToString;
    use alloc::vec;

    /// Uncoupled scalar 1D spec with constant `a`, `b`, `l`.
    pub(crate) fn scalar(a: f64, b: f64, l: f64) -> SystemSpec {
        SystemSpec {
            name: "probe".to_string(),
            m: 1,
            dim: 1,
            form: Form::Control,
            fast: false,
            controls: ControlSet::trivial(),
            gamma: 0.0,
            mu: 1.0,
            constants: StructuralConstants { c_a: 0.0, c_f: 0.0, c_sup: l.abs(), nu: a * a },
            u0: vec![CoefficientField::zero()],
            coefficients: vec![Branch {
                component: 0,
                theta: 0,
                zeta: 0,
                a: vec![CoefficientField::constant(a)],
                b: vec![CoefficientField::constant(b)],
                l: CoefficientField::constant(l),
                d: vec![CoefficientField::zero()],
                q: CoefficientField::zero(),
            }],
        }
        .validated()
        .unwrap()
    }
}
