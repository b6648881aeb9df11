//! Weakly coupled min-max systems: coefficient tables, control sets and the
//! structural checks every solver relies on.
//!
//! Each component `i` and control pair `(theta, zeta)` owns one [`Branch`]
//! holding the diffusion square root `a`, the drift `b`, the running cost
//! `l`, the coupling row `d_i.` and (general form only) the coefficient `q`
//! of a `|p|` term. The operator of component `i` is
//!
//! ```text
//! H_i(t,x,r,p,X) = min_zeta max_theta { -tr(A X) + b.p + l + sum_j d_ij r_j + q |p| },  A = a a^T
//! ```
//!
//! Coupling rows follow the generator convention: `d_ij <= 0` off the
//! diagonal and every row sums to zero.

pub mod catalog;
mod field;
mod verify;

pub use catalog::{build_catalog_scenario, catalog_names};
pub use field::{cos_x, sin_x, CoefficientField, Envelope, Point, TrigTerm, Wave};
pub use verify::{
    verify_declared_constants, verify_ellipticity, verify_quasi_monotonicity, ConstantsReport,
    EllipticityReport, QuasiMonotonicityReport, QuasiMonotonicityWitness,
};

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("no such scenario: {0}")]
    UnknownScenario(String),
    #[error("fast-variable arity mismatch")]
    FastArityMismatch,
    #[error("index out of range: {0}")]
    IndexOutOfRange(&'static str),
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("coupling row {row} violates the generator convention: {reason}")]
    NotGenerator { row: usize, reason: &'static str },
    #[error("scenario {0} failed validation: {1}")]
    ValidationFailed(String, String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub theta: Vec<String>,
    pub zeta: Vec<String>,
}

impl ControlSet {
    pub fn trivial() -> Self {
        Self { theta: alloc::vec![String::from("0")], zeta: alloc::vec![String::from("0")] }
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.theta.len(), self.zeta.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    #[serde(rename = "control_form")]
    Control,
    #[serde(rename = "general_form")]
    General,
}

/// Declared structural constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    /// Lipschitz constant of the diffusion square root in `x`.
    pub c_a: f64,
    /// Space regularity constant of the lower-order part.
    pub c_f: f64,
    /// `sup |f(t,x,0,0,0)|`.
    pub c_sup: f64,
    /// Ellipticity constant; zero for degenerate systems.
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub component: usize,
    pub theta: usize,
    pub zeta: usize,
    /// `dim x dim` diffusion square root, row-major.
    pub a: Vec<CoefficientField>,
    pub b: Vec<CoefficientField>,
    pub l: CoefficientField,
    pub d: Vec<CoefficientField>,
    #[serde(default, skip_serializing_if = "CoefficientField::is_zero")]
    pub q: CoefficientField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub m: usize,
    pub dim: usize,
    pub form: Form,
    /// Whether coefficients depend on a fast periodic variable `y`.
    #[serde(default)]
    pub fast: bool,
    pub controls: ControlSet,
    pub gamma: f64,
    pub mu: f64,
    pub constants: StructuralConstants,
    pub u0: Vec<CoefficientField>,
    pub coefficients: Vec<Branch>,
}

/// Coefficients of one branch at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSample {
    pub dim: usize,
    pub a: [[f64; 2]; 2],
    /// `A = a a^T`.
    pub diffusion: [[f64; 2]; 2],
    pub drift: [f64; 2],
    pub running_cost: f64,
    pub coupling: Vec<f64>,
    pub grad_norm: f64,
}

impl CoefficientSample {
    /// Lower-order part `f(r, p) = b.p + l + sum_j d_ij r_j + q |p|`.
    pub fn lower_order(&self, r: &[f64], p: &[f64; 2]) -> f64 {
        let mut f = self.running_cost + self.grad_norm * norm2(p, self.dim);
        for k in 0..self.dim {
            f += self.drift[k] * p[k];
        }
        for (d, rj) in self.coupling.iter().zip(r) {
            f += d * rj;
        }
        f
    }

    /// `tr(A X)` for a row-major `dim x dim` matrix `X`.
    pub fn trace_ax(&self, x: &[[f64; 2]; 2]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.diffusion[i][j] * x[j][i];
            }
        }
        s
    }
}

pub(crate) fn norm2(p: &[f64; 2], dim: usize) -> f64 {
    if dim == 1 {
        p[0].abs()
    } else {
        libm::hypot(p[0], p[1])
    }
}

impl SystemSpec {
    pub fn branch_count(&self) -> usize {
        self.m * self.controls.theta.len() * self.controls.zeta.len()
    }

    fn branch_index(&self, i: usize, theta: usize, zeta: usize) -> usize {
        let (nt, nz) = self.controls.sizes();
        (i * nt + theta) * nz + zeta
    }

    /// Branch of component `i` for controls `(theta, zeta)`.
    ///
    /// # Panics
    /// Panics on out-of-range indices; the spec must have been validated.
    #[inline]
    pub fn branch(&self, i: usize, theta: usize, zeta: usize) -> &Branch {
        let b = &self.coefficients[self.branch_index(i, theta, zeta)];
        debug_assert!(b.component == i && b.theta == theta && b.zeta == zeta);
        b
    }

    pub fn branch_mut(&mut self, i: usize, theta: usize, zeta: usize) -> &mut Branch {
        let idx = self.branch_index(i, theta, zeta);
        &mut self.coefficients[idx]
    }

    pub fn branches_of(&self, i: usize) -> impl Iterator<Item = &Branch> {
        self.coefficients.iter().filter(move |b| b.component == i)
    }

    fn all_fields(&self) -> impl Iterator<Item = &CoefficientField> {
        self.coefficients.iter().flat_map(|b| {
            b.a.iter().chain(b.b.iter()).chain(core::iter::once(&b.l)).chain(b.d.iter()).chain(core::iter::once(&b.q))
        })
    }

    pub fn depends_on_t(&self) -> bool {
        self.all_fields().any(CoefficientField::depends_on_t)
    }

    pub fn depends_on_x(&self) -> bool {
        self.all_fields().any(CoefficientField::depends_on_x)
    }

    /// True when every branch of component `i` shares the same diffusion, so
    /// the second-order part is linear (invariant measures exist).
    pub fn diffusion_is_control_free(&self, i: usize) -> bool {
        let mut it = self.branches_of(i);
        let first = match it.next() {
            Some(b) => &b.a,
            None => return false,
        };
        it.all(|b| &b.a == first)
    }

    pub fn has_trivial_zeta(&self) -> bool {
        self.controls.zeta.len() == 1
    }

    /// Sorts the coefficient table into canonical order and checks that it
    /// is well formed. Does not check the generator convention; see
    /// [`SystemSpec::check_generator_rows`].
    pub fn validated(mut self) -> Result<Self, ScenarioError> {
        use alloc::format;
        let bad = |s: String| Err(ScenarioError::Malformed(s));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if self.controls.theta.is_empty() || self.controls.zeta.is_empty() {
            return bad("control sets must be non-empty".into());
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("Hoelder exponent must lie in (0, 1], got {}", self.mu));
        }
        let c = self.constants;
        if !(c.c_a >= 0.0 && c.c_f >= 0.0 && c.c_sup >= 0.0 && c.nu >= 0.0) || !c.c_sup.is_finite() {
            return bad("structural constants must be finite and nonnegative".into());
        }
        if self.u0.len() != self.m {
            return bad(format!("u0 has {} components, expected {}", self.u0.len(), self.m));
        }
        self.coefficients.sort_by_key(|b| (b.component, b.theta, b.zeta));
        let (nt, nz) = self.controls.sizes();
        if self.coefficients.len() != self.m * nt * nz {
            return bad(format!(
                "expected {} coefficient branches, found {}",
                self.m * nt * nz,
                self.coefficients.len()
            ));
        }
        for i in 0..self.m {
            for th in 0..nt {
                for z in 0..nz {
                    let b = &self.coefficients[(i * nt + th) * nz + z];
                    if (b.component, b.theta, b.zeta) != (i, th, z) {
                        return bad(format!("missing or duplicate branch ({i}, {th}, {z})"));
                    }
                    if b.a.len() != self.dim * self.dim || b.b.len() != self.dim || b.d.len() != self.m {
                        return bad(format!("branch ({i}, {th}, {z}) has wrong field counts"));
                    }
                    if self.form == Form::Control && !b.q.is_zero() {
                        return bad(format!("control_form branch ({i}, {th}, {z}) carries a |p| term"));
                    }
                    if b.q.inner_lower_bound() < 0.0 || b.q.envelope != Envelope::Linear {
                        return bad(format!("|p| coefficient of branch ({i}, {th}, {z}) must be linear and nonnegative"));
                    }
                    if b.l.envelope != Envelope::Linear
                        || b.b.iter().chain(b.d.iter()).any(|f| f.envelope != Envelope::Linear)
                    {
                        return bad("only diffusion entries may carry a sqrt envelope".into());
                    }
                }
            }
        }
        for f in self.all_fields().chain(self.u0.iter()) {
            if f.envelope == Envelope::Sqrt && f.inner_lower_bound() < 0.0 {
                return bad("sqrt envelope over a polynomial that can become negative".into());
            }
            let mut coeffs = f.terms.iter().map(|t| t.amp).chain(core::iter::once(f.offset));
            if !coeffs.all(f64::is_finite) || f.terms.iter().any(|t| !t.t.is_finite()) {
                return bad("non-finite coefficient".into());
            }
            if self.dim == 1 && f.terms.iter().any(|t| t.x[1] != 0 || t.y[1] != 0) {
                return bad("second-axis frequency in a 1D scenario".into());
            }
            if !self.fast && f.depends_on_y() {
                return bad("fast-variable frequency in a scenario without fast variable".into());
            }
        }
        if self.u0.iter().any(|f| f.depends_on_t() || f.depends_on_y()) {
            return bad("initial data may depend on x only".into());
        }
        Ok(self)
    }

    /// Checks `d_ij <= 0` for `j != i` and exact zero row sums for every branch.
    pub fn check_generator_rows(&self) -> Result<(), ScenarioError> {
        for b in &self.coefficients {
            for (j, dij) in b.d.iter().enumerate() {
                if j != b.component && dij.inner_upper_bound() > 0.0 {
                    return Err(ScenarioError::NotGenerator {
                        row: b.component,
                        reason: "positive off-diagonal entry",
                    });
                }
            }
            if !CoefficientField::sum_vanishes(b.d.iter()) {
                return Err(ScenarioError::NotGenerator { row: b.component, reason: "row sum is not zero" });
            }
        }
        Ok(())
    }
}

/// Exact evaluation of the branch `(i, theta, zeta)` at `(t, x, y)`.
///
/// `y` must be given exactly when the spec has a fast variable.
pub fn eval_coefficients(
    spec: &SystemSpec,
    i: usize,
    theta: usize,
    zeta: usize,
    t: f64,
    x: &Point,
    y: Option<&Point>,
) -> Result<CoefficientSample, ScenarioError> {
    if i >= spec.m {
        return Err(ScenarioError::IndexOutOfRange("component"));
    }
    let (nt, nz) = spec.controls.sizes();
    if theta >= nt || zeta >= nz {
        return Err(ScenarioError::IndexOutOfRange("control"));
    }
    let y = match (spec.fast, y) {
        (true, Some(y)) => *y,
        (false, None) => [0.0; 2],
        _ => return Err(ScenarioError::FastArityMismatch),
    };
    Ok(sample_branch(spec.branch(i, theta, zeta), spec.dim, t, x, &y))
}

pub(crate) fn sample_branch(br: &Branch, dim: usize, t: f64, x: &Point, y: &Point) -> CoefficientSample {
    let mut a = [[0.0; 2]; 2];
    for r in 0..dim {
        for c in 0..dim {
            a[r][c] = br.a[r * dim + c].eval(t, x, y);
        }
    }
    let mut diffusion = [[0.0; 2]; 2];
    for r in 0..dim {
        for c in 0..dim {
            diffusion[r][c] = (0..dim).map(|k| a[r][k] * a[c][k]).sum();
        }
    }
    let mut drift = [0.0; 2];
    for k in 0..dim {
        drift[k] = br.b[k].eval(t, x, y);
    }
    CoefficientSample {
        dim,
        a,
        diffusion,
        drift,
        running_cost: br.l.eval(t, x, y),
        coupling: br.d.iter().map(|f| f.eval(t, x, y)).collect(),
        grad_norm: br.q.eval(t, x, y),
    }
}
