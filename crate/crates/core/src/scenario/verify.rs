//! Sampled checks of the structural assumptions on a [`SystemSpec`].

use super::{sample_branch, Point, SystemSpec};
use crate::sampling::SampleRng;
use alloc::vec;
use alloc::vec::Vec;

const TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct QuasiMonotonicityWitness {
    pub component: usize,
    pub theta: usize,
    pub zeta: usize,
    pub t: f64,
    pub x: Point,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    /// `f_j(r) - f_j(s)`.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasiMonotonicityReport {
    pub pass: bool,
    /// Smallest sampled ratio `(f_j(r) - f_j(s)) / (r_j - s_j)`.
    pub estimated_gamma: f64,
    pub witness: Option<QuasiMonotonicityWitness>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub pass: bool,
    pub estimated_nu: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantsReport {
    pub pass: bool,
    pub sampled_c_a: f64,
    pub sampled_c_f: f64,
    pub sampled_c_sup: f64,
}

struct PointSampler<'a> {
    spec: &'a SystemSpec,
    rng: SampleRng,
}

impl PointSampler<'_> {
    fn point(&mut self) -> Point {
        let x0 = self.rng.unit();
        let x1 = if self.spec.dim == 2 { self.rng.unit() } else { 0.0 };
        [x0, x1]
    }

    fn fast_point(&mut self) -> Point {
        if self.spec.fast {
            self.point()
        } else {
            [0.0; 2]
        }
    }
}

/// Every `dim`-vector of `{0, 1, -1}` patterns for the entries other than
/// `j`, with entry `j` pinned to one; zeros come first so the first pattern
/// is the unit vector.
fn sign_patterns(m: usize, j: usize) -> Vec<Vec<f64>> {
    let others = m - 1;
    let count = 3usize.pow(others as u32);
    (0..count)
        .map(|mut code| {
            let mut v = vec![0.0; m];
            v[j] = 1.0;
            for (k, slot) in v.iter_mut().enumerate() {
                if k == j {
                    continue;
                }
                *slot = [0.0, 1.0, -1.0][code % 3];
                code /= 3;
            }
            v
        })
        .collect()
}

/// Samples `(t, x, p, theta, zeta)` and pairs `(r, s)` with
/// `r_j - s_j = max_k (r_k - s_k) >= 0` and checks
/// `f_j(r) - f_j(s) >= gamma (r_j - s_j)`.
///
/// Exhaustive `{0, 1, -1}` difference patterns at `s = 0` are tried first, at
/// the origin, so generator structure is probed at its extremal directions.
pub fn verify_quasi_monotonicity(spec: &SystemSpec, budget: usize, seed: u64) -> QuasiMonotonicityReport {
    let budget = budget.max(1);
    let (nt, nz) = spec.controls.sizes();
    let m = spec.m;
    let mut sampler = PointSampler { spec, rng: SampleRng::new(seed) };
    let mut report = QuasiMonotonicityReport { pass: true, estimated_gamma: f64::INFINITY, witness: None, samples: 0 };

    let check = |report: &mut QuasiMonotonicityReport,
                     j: usize,
                     th: usize,
                     z: usize,
                     t: f64,
                     x: Point,
                     y: Point,
                     p: [f64; 2],
                     r: Vec<f64>,
                     s: Vec<f64>| {
        let sample = sample_branch(spec.branch(j, th, z), spec.dim, t, &x, &y);
        let diff = sample.lower_order(&r, &p) - sample.lower_order(&s, &p);
        let gap = r[j] - s[j];
        report.samples += 1;
        if gap > 0.0 {
            report.estimated_gamma = report.estimated_gamma.min(diff / gap);
        }
        let floor = spec.gamma * gap - TOL * (1.0 + diff.abs());
        if diff < floor && report.witness.is_none() {
            report.pass = false;
            report.witness =
                Some(QuasiMonotonicityWitness { component: j, theta: th, zeta: z, t, x, r, s, difference: diff });
        }
    };

    for j in 0..m {
        for th in 0..nt {
            for z in 0..nz {
                for pattern in sign_patterns(m, j) {
                    check(&mut report, j, th, z, 0.0, [0.0; 2], [0.0; 2], [0.0; 2], pattern, vec![0.0; m]);
                }
            }
        }
    }

    for _ in 0..budget {
        let t = sampler.rng.unit();
        let x = sampler.point();
        let y = sampler.fast_point();
        let p = [sampler.rng.uniform(-1.0, 1.0), if spec.dim == 2 { sampler.rng.uniform(-1.0, 1.0) } else { 0.0 }];
        let j = sampler.rng.index(m);
        let th = sampler.rng.index(nt);
        let z = sampler.rng.index(nz);
        let s: Vec<f64> = (0..m).map(|_| sampler.rng.uniform(-1.0, 1.0)).collect();
        let lead = sampler.rng.uniform(0.0, 1.0);
        let r: Vec<f64> = (0..m)
            .map(|k| s[k] + if k == j { lead } else { sampler.rng.uniform(-1.0, lead) })
            .collect();
        check(&mut report, j, th, z, t, x, y, p, r, s);
    }
    if !report.estimated_gamma.is_finite() {
        report.estimated_gamma = 0.0;
    }
    report
}

fn min_eigenvalue(a: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return a[0][0];
    }
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let off = 0.5 * (a[0][1] + a[1][0]);
    mean - libm::hypot(half_diff, off)
}

/// Minimum sampled eigenvalue of `A_i^{theta zeta}` over points, controls and
/// components. A 64-point diagonal lattice is scanned before random samples.
pub fn verify_ellipticity(spec: &SystemSpec, budget: usize, seed: u64) -> EllipticityReport {
    let budget = budget.max(1);
    let mut sampler = PointSampler { spec, rng: SampleRng::new(seed) };
    let mut nu = f64::INFINITY;
    let mut visit = |t: f64, x: Point, y: Point| {
        for br in &spec.coefficients {
            let s = sample_branch(br, spec.dim, t, &x, &y);
            nu = nu.min(min_eigenvalue(&s.diffusion, spec.dim));
        }
    };
    const LATTICE: usize = 64;
    for k in 0..LATTICE {
        let v = k as f64 / LATTICE as f64;
        let x = if spec.dim == 2 { [v, v] } else { [v, 0.0] };
        let y = if spec.fast { x } else { [0.0; 2] };
        visit(0.0, x, y);
    }
    for _ in 0..budget {
        let t = sampler.rng.unit();
        let x = sampler.point();
        let y = sampler.fast_point();
        visit(t, x, y);
    }
    EllipticityReport {
        pass: nu >= spec.constants.nu - TOL,
        estimated_nu: nu,
        degenerate: nu <= TOL,
    }
}

/// Finite-difference estimates of the moduli behind `C_a`, `C_f` and `C^f`,
/// compared against the declared constants.
pub fn verify_declared_constants(spec: &SystemSpec, budget: usize, seed: u64) -> ConstantsReport {
    let budget = budget.max(1);
    let mut sampler = PointSampler { spec, rng: SampleRng::new(seed) };
    let dim = spec.dim;
    let mut c_a: f64 = 0.0;
    let mut c_f: f64 = 0.0;
    let mut c_sup: f64 = 0.0;
    let r_unit = vec![1.0 / libm::sqrt(spec.m as f64); spec.m];
    for _ in 0..budget {
        let t = sampler.rng.unit();
        let x = sampler.point();
        let y0 = sampler.fast_point();
        let step = sampler.rng.uniform(1e-3, 0.25);
        let dir = if dim == 2 {
            let ang = sampler.rng.uniform(0.0, core::f64::consts::TAU);
            [libm::cos(ang), libm::sin(ang)]
        } else {
            [1.0, 0.0]
        };
        let xs = [x[0] + step * dir[0], x[1] + step * dir[1]];
        for br in &spec.coefficients {
            let s1 = sample_branch(br, dim, t, &x, &y0);
            let s2 = sample_branch(br, dim, t, &xs, &y0);
            c_sup = c_sup.max(s1.running_cost.abs());
            let mut da = 0.0;
            for r in 0..dim {
                for c in 0..dim {
                    let e = s1.a[r][c] - s2.a[r][c];
                    da += e * e;
                }
            }
            c_a = c_a.max(libm::sqrt(da) / step);
            // zero-gradient part at |r| = 1, relative to |x-y|^mu
            let zero = (s1.lower_order(&r_unit, &[0.0; 2]) - s2.lower_order(&r_unit, &[0.0; 2])).abs();
            c_f = c_f.max(zero / libm::pow(step, spec.mu));
            // gradient part at |p| = 1, relative to |p||x-y|
            let p = dir;
            let grad = ((s1.lower_order(&r_unit, &p) - s1.lower_order(&r_unit, &[0.0; 2]))
                - (s2.lower_order(&r_unit, &p) - s2.lower_order(&r_unit, &[0.0; 2])))
            .abs();
            c_f = c_f.max(grad / step);
        }
    }
    let k = spec.constants;
    let slack = 1e-9;
    ConstantsReport {
        pass: c_a <= k.c_a + slack && c_f <= k.c_f + slack && c_sup <= k.c_sup + slack,
        sampled_c_a: c_a,
        sampled_c_f: c_f,
        sampled_c_sup: c_sup,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_catalog_scenario, catalog_names, CoefficientField};

    #[test]
    fn generator_pair_is_quasi_monotone_with_gamma_zero() {
        let spec = build_catalog_scenario("coupled_switch_2sys").unwrap();
        let report = verify_quasi_monotonicity(&spec, 500, 3);
        assert!(report.pass);
        assert_eq!(report.estimated_gamma, 0.0);
    }

    #[test]
    fn positive_off_diagonal_fails_with_unit_witness() {
        let mut spec = build_catalog_scenario("coupled_switch_2sys").unwrap();
        spec.branch_mut(0, 0, 0).d = vec![CoefficientField::constant(-1.0), CoefficientField::constant(1.0)];
        let report = verify_quasi_monotonicity(&spec, 100, 0);
        assert!(!report.pass);
        let w = report.witness.unwrap();
        assert_eq!(w.component, 0);
        assert_eq!(w.r, vec![1.0, 0.0]);
        assert_eq!(w.s, vec![0.0, 0.0]);
        assert_eq!(w.difference, -1.0);
    }

    #[test]
    fn uncoupled_scalar_has_gamma_zero() {
        let spec = build_catalog_scenario("heat_1d").unwrap();
        let report = verify_quasi_monotonicity(&spec, 50, 1);
        assert!(report.pass);
        assert_eq!(report.estimated_gamma, 0.0);
    }

    #[test]
    fn sign_patterns_cover_three_to_the_m_minus_one() {
        let pats = sign_patterns(3, 1);
        assert_eq!(pats.len(), 9);
        assert_eq!(pats[0], vec![0.0, 1.0, 0.0]);
        assert!(pats.iter().all(|p| p[1] == 1.0));
    }

    #[test]
    fn ellipticity_examples() {
        let heat = verify_ellipticity(&build_catalog_scenario("heat_1d").unwrap(), 100, 0);
        assert_eq!(heat.estimated_nu, 1.0);
        assert!(heat.pass && !heat.degenerate);
        let hom = verify_ellipticity(&build_catalog_scenario("hom_linear_1d").unwrap(), 100, 0);
        assert!((hom.estimated_nu - 1.0).abs() < 1e-12);
        assert!(hom.pass);
        let fo = verify_ellipticity(&build_catalog_scenario("firstorder_2sys").unwrap(), 100, 0);
        assert_eq!(fo.estimated_nu, 0.0);
        assert!(fo.degenerate && fo.pass);
    }

    #[test]
    fn declared_constants_dominate_sampled_moduli() {
        for name in catalog_names() {
            let spec = build_catalog_scenario(name).unwrap();
            let report = verify_declared_constants(&spec, 2000, 11);
            assert!(report.pass, "{name}: {report:?} vs {:?}", spec.constants);
        }
    }
}
