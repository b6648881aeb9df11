//! Built-in scenarios.
//!
//! | key                   | m | dim | notes                                              |
//! |-----------------------|---|-----|----------------------------------------------------|
//! | `heat_1d`             | 1 | 1   | `u_t = u_xx`, `u0 = sin 2 pi x`                    |
//! | `coupled_switch_2sys` | 2 | 1   | generator coupling `[[1,-1],[-1,1]]`, distinct costs |
//! | `isaacs_1d`           | 1 | 1   | 2x2 control game, time-dependent cost              |
//! | `firstorder_2sys`     | 2 | 1   | degenerate (`a = 0`), switching drifts             |
//! | `hom_linear_1d`       | 1 | 1   | `a(x,y) = sqrt(2 + sin 2 pi y)`                    |
//! | `hom_linear_2d`       | 1 | 2   | isotropic oscillating diffusion, oscillating cost  |
//! | `hom_isaacs_1d`       | 1 | 1   | general form, two oscillating diffusions, `q |p|`  |

use super::{
    verify_ellipticity, verify_quasi_monotonicity, Branch, CoefficientField, ControlSet, Envelope, Form,
    ScenarioError, StructuralConstants, SystemSpec, TrigTerm, Wave,
};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

const NAMES: [&str; 7] = [
    "heat_1d",
    "coupled_switch_2sys",
    "isaacs_1d",
    "firstorder_2sys",
    "hom_linear_1d",
    "hom_linear_2d",
    "hom_isaacs_1d",
];

pub fn catalog_names() -> &'static [&'static str] {
    &NAMES
}

/// Builds, validates and verifies a catalog scenario.
pub fn build_catalog_scenario(name: &str) -> Result<SystemSpec, ScenarioError> {
    let spec = match name {
        "heat_1d" => heat_1d(),
        "coupled_switch_2sys" => coupled_switch_2sys(),
        "isaacs_1d" => isaacs_1d(),
        "firstorder_2sys" => firstorder_2sys(),
        "hom_linear_1d" => hom_linear_1d(),
        "hom_linear_2d" => hom_linear_2d(),
        "hom_isaacs_1d" => hom_isaacs_1d(),
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    };
    let spec = spec.validated()?;
    spec.check_generator_rows()?;
    let qm = verify_quasi_monotonicity(&spec, 256, 0);
    if !qm.pass {
        return Err(ScenarioError::ValidationFailed(spec.name.clone(), "quasi-monotonicity".to_string()));
    }
    if spec.constants.nu > 0.0 && !verify_ellipticity(&spec, 256, 0).pass {
        return Err(ScenarioError::ValidationFailed(spec.name.clone(), "ellipticity".to_string()));
    }
    Ok(spec)
}

fn c(v: f64) -> CoefficientField {
    CoefficientField::constant(v)
}

fn wave_x(amp: f64, wave: Wave, kx: [i32; 2]) -> TrigTerm {
    TrigTerm::new(amp, wave).with_x(kx)
}

fn wave_y(amp: f64, wave: Wave, ky: [i32; 2]) -> TrigTerm {
    TrigTerm::new(amp, wave).with_y(ky)
}

fn generator(m: usize, rate: f64, i: usize) -> Vec<CoefficientField> {
    (0..m).map(|j| if j == i { c(rate) } else { c(-rate / (m - 1) as f64) }).collect()
}

fn no_coupling(m: usize) -> Vec<CoefficientField> {
    vec![c(0.0); m]
}

/// Derives structural constants from the exact bounds of the trigonometric
/// representation. `C_f` is evaluated at `R = 1`.
pub fn derive_constants(spec: &SystemSpec) -> StructuralConstants {
    let dim = spec.dim;
    let diameter = libm::sqrt(dim as f64) / 2.0;
    let holder_factor = libm::pow(diameter, 1.0 - spec.mu);
    let mut c_a: f64 = 0.0;
    let mut c_f: f64 = 0.0;
    let mut c_sup: f64 = 0.0;
    let mut nu = f64::INFINITY;
    for br in &spec.coefficients {
        c_a = c_a.max(br.a.iter().map(CoefficientField::lipschitz_x).fold(0.0, |s, v| s + v));
        let p_part = br.b.iter().map(CoefficientField::lipschitz_x).fold(0.0, |s, v| s + v) + br.q.lipschitz_x();
        let zero_part = br.l.lipschitz_x() + br.d.iter().map(CoefficientField::lipschitz_x).fold(0.0, |s, v| s + v);
        c_f = c_f.max(p_part).max(zero_part * holder_factor);
        c_sup = c_sup.max(br.l.sup_bound());
        nu = nu.min(ellipticity_floor(br, dim));
    }
    // `+ 0.0` folds negative zeros from products with zero into `0.0`
    StructuralConstants { c_a: c_a + 0.0, c_f: c_f + 0.0, c_sup: c_sup + 0.0, nu }
}

fn ellipticity_floor(br: &Branch, dim: usize) -> f64 {
    let off_diagonal_free = (0..dim).all(|r| (0..dim).all(|c| r == c || br.a[r * dim + c].is_zero()));
    if !off_diagonal_free {
        return 0.0;
    }
    (0..dim)
        .map(|k| {
            let f = &br.a[k * dim + k];
            let lo = f.lower_bound();
            let hi_neg = f.envelope == Envelope::Linear && f.inner_upper_bound() < 0.0;
            if lo > 0.0 {
                lo * lo
            } else if hi_neg {
                f.inner_upper_bound() * f.inner_upper_bound()
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

struct Draft {
    name: &'static str,
    m: usize,
    dim: usize,
    form: Form,
    fast: bool,
    controls: ControlSet,
    mu: f64,
    u0: Vec<CoefficientField>,
    branches: Vec<Branch>,
}

impl Draft {
    fn new(name: &'static str, m: usize, dim: usize) -> Self {
        Self {
            name,
            m,
            dim,
            form: Form::Control,
            fast: false,
            controls: ControlSet::trivial(),
            mu: 1.0,
            u0: Vec::new(),
            branches: Vec::new(),
        }
    }

    fn controls(mut self, theta: &[&str], zeta: &[&str]) -> Self {
        self.controls = ControlSet {
            theta: theta.iter().map(|s| String::from(*s)).collect(),
            zeta: zeta.iter().map(|s| String::from(*s)).collect(),
        };
        self
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        mut self,
        (component, theta, zeta): (usize, usize, usize),
        a: Vec<CoefficientField>,
        b: Vec<CoefficientField>,
        l: CoefficientField,
        d: Vec<CoefficientField>,
        q: CoefficientField,
    ) -> Self {
        self.branches.push(Branch { component, theta, zeta, a, b, l, d, q });
        self
    }

    fn finish(self) -> SystemSpec {
        let mut spec = SystemSpec {
            name: self.name.to_string(),
            m: self.m,
            dim: self.dim,
            form: self.form,
            fast: self.fast,
            controls: self.controls,
            gamma: 0.0,
            mu: self.mu,
            constants: StructuralConstants { c_a: 0.0, c_f: 0.0, c_sup: 0.0, nu: 0.0 },
            u0: self.u0,
            coefficients: self.branches,
        };
        spec.coefficients.sort_by_key(|b| (b.component, b.theta, b.zeta));
        spec.constants = derive_constants(&spec);
        spec
    }
}

fn heat_1d() -> SystemSpec {
    let mut d = Draft::new("heat_1d", 1, 1);
    d.u0 = vec![super::sin_x(1.0, [1, 0])];
    d.branch((0, 0, 0), vec![c(1.0)], vec![c(0.0)], c(0.0), no_coupling(1), c(0.0)).finish()
}

fn coupled_switch_2sys() -> SystemSpec {
    let mut d = Draft::new("coupled_switch_2sys", 2, 1);
    d.u0 = vec![super::sin_x(1.0, [1, 0]), super::cos_x(1.0, [1, 0])];
    d.branch(
        (0, 0, 0),
        vec![c(0.5)],
        vec![c(0.25)],
        c(0.5).term(wave_x(0.25, Wave::Cos, [1, 0])),
        generator(2, 1.0, 0),
        c(0.0),
    )
    .branch(
        (1, 0, 0),
        vec![c(0.5)],
        vec![c(-0.25)],
        c(-0.5).term(wave_x(0.25, Wave::Sin, [1, 0])),
        generator(2, 1.0, 1),
        c(0.0),
    )
    .finish()
}

fn isaacs_1d() -> SystemSpec {
    let mut d = Draft::new("isaacs_1d", 1, 1).controls(&["minus", "plus"], &["calm", "noisy"]);
    d.u0 = vec![super::sin_x(0.5, [1, 0]).plus(&super::cos_x(0.25, [2, 0]))];
    for (th, sign) in [(0usize, -1.0), (1, 1.0)] {
        for (z, sigma) in [(0usize, 0.3), (1, 0.5)] {
            let cost = c(0.1 * z as f64).term(TrigTerm::new(0.2 * sign, Wave::Cos).with_x([1, 0]).with_t(-0.5));
            d = d.branch((0, th, z), vec![c(sigma)], vec![c(0.5 * sign)], cost, no_coupling(1), c(0.0));
        }
    }
    d.finish()
}

fn firstorder_2sys() -> SystemSpec {
    let mut d = Draft::new("firstorder_2sys", 2, 1).controls(&["fast", "slow"], &["0"]);
    d.u0 = vec![super::sin_x(1.0, [1, 0]), super::cos_x(1.0, [1, 0])];
    for (th, speed) in [(0usize, 1.0), (1, 0.5)] {
        d = d
            .branch(
                (0, th, 0),
                vec![c(0.0)],
                vec![c(speed)],
                c(0.0).term(wave_x(0.3, Wave::Cos, [1, 0])),
                generator(2, 0.5, 0),
                c(0.0),
            )
            .branch(
                (1, th, 0),
                vec![c(0.0)],
                vec![c(-speed)],
                c(0.0).term(wave_x(0.3, Wave::Sin, [1, 0])),
                generator(2, 0.5, 1),
                c(0.0),
            );
    }
    d.finish()
}

fn hom_linear_1d() -> SystemSpec {
    let mut d = Draft::new("hom_linear_1d", 1, 1);
    d.fast = true;
    d.u0 = vec![super::sin_x(1.0, [1, 0])];
    let a = CoefficientField::sqrt_of(c(2.0).term(wave_y(1.0, Wave::Sin, [1, 0])));
    d.branch((0, 0, 0), vec![a], vec![c(0.0)], c(0.0), no_coupling(1), c(0.0)).finish()
}

fn hom_linear_2d() -> SystemSpec {
    let mut d = Draft::new("hom_linear_2d", 1, 2);
    d.fast = true;
    // sin(2 pi x1) sin(2 pi x2)
    d.u0 = vec![super::cos_x(0.5, [1, -1]).plus(&super::cos_x(-0.5, [1, 1]))];
    let a = CoefficientField::sqrt_of(
        c(2.0).term(wave_y(0.5, Wave::Sin, [1, 0])).term(wave_y(0.5, Wave::Sin, [0, 1])),
    );
    d.branch(
        (0, 0, 0),
        vec![a.clone(), c(0.0), c(0.0), a],
        vec![c(0.0), c(0.0)],
        c(0.0).term(wave_y(0.5, Wave::Cos, [1, 0])),
        no_coupling(1),
        c(0.0),
    )
    .finish()
}

fn hom_isaacs_1d() -> SystemSpec {
    let mut d = Draft::new("hom_isaacs_1d", 1, 1).controls(&["sin", "cos"], &["0"]);
    d.form = Form::General;
    d.fast = true;
    d.u0 = vec![super::sin_x(1.0, [1, 0])];
    let a0 = CoefficientField::sqrt_of(c(1.5).term(wave_y(0.5, Wave::Sin, [1, 0])));
    let a1 = CoefficientField::sqrt_of(c(1.5).term(wave_y(0.5, Wave::Cos, [1, 0])));
    d.branch(
        (0, 0, 0),
        vec![a0],
        vec![c(0.0)],
        c(0.0).term(wave_y(0.2, Wave::Sin, [1, 0])),
        no_coupling(1),
        c(0.5),
    )
    .branch(
        (0, 1, 0),
        vec![a1],
        vec![c(0.0)],
        c(-0.1).term(wave_x(0.2, Wave::Cos, [1, 0])),
        no_coupling(1),
        c(0.0),
    )
    .finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_catalog_key_builds_deterministically() {
        for name in catalog_names() {
            let a = build_catalog_scenario(name).unwrap();
            let b = build_catalog_scenario(name).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.name, *name);
        }
    }

    #[test]
    fn unknown_key_is_reported() {
        assert_eq!(
            build_catalog_scenario("wave_3d"),
            Err(ScenarioError::UnknownScenario("wave_3d".to_string()))
        );
        assert_eq!(
            build_catalog_scenario("wave_3d").unwrap_err().to_string(),
            "no such scenario: wave_3d"
        );
    }

    #[test]
    fn derived_constants_match_hand_values() {
        let heat = build_catalog_scenario("heat_1d").unwrap();
        assert_eq!(heat.constants, StructuralConstants { c_a: 0.0, c_f: 0.0, c_sup: 0.0, nu: 1.0 });
        let sw = build_catalog_scenario("coupled_switch_2sys").unwrap();
        assert!((sw.constants.c_sup - 0.75).abs() < 1e-15);
        assert!((sw.constants.c_f - core::f64::consts::FRAC_PI_2).abs() < 1e-14);
        assert_eq!(sw.constants.nu, 0.25);
        let fo = build_catalog_scenario("firstorder_2sys").unwrap();
        assert_eq!(fo.constants.nu, 0.0);
        let hom = build_catalog_scenario("hom_linear_1d").unwrap();
        assert!((hom.constants.nu - 1.0).abs() < 1e-15);
    }
}
