//! Exactly evaluable coefficient fields.
//!
//! A [`CoefficientField`] is a finite trigonometric polynomial in time, the
//! slow variable `x` and (optionally) the fast variable `y`:
//!
//! ```text
//! g(t, x, y) = offset + sum_k amp_k * wave_k(2 pi (tf_k t + kx_k . x + ky_k . y))
//! ```
//!
//! Space frequencies are integers, so every field is 1-periodic in each
//! coordinate of `x` and `y`. A field may carry a square-root envelope, in
//! which case its value is `sqrt(g)`; this is how diffusion square roots such
//! as `sqrt(2 + sin(2 pi y))` are expressed.

use alloc::vec::Vec;
use core::f64::consts::TAU;
use serde::{Deserialize, Serialize};

/// A point of the (at most two dimensional) torus. In 1D the second
/// coordinate is ignored and kept at zero.
pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Sin,
    Cos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub wave: Wave,
    /// Time frequency (any real number; time is not periodic).
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub x: [i32; 2],
    #[serde(default)]
    pub y: [i32; 2],
}

impl TrigTerm {
    pub fn new(amp: f64, wave: Wave) -> Self {
        Self { amp, wave, t: 0.0, x: [0, 0], y: [0, 0] }
    }

    pub fn with_x(mut self, kx: [i32; 2]) -> Self {
        self.x = kx;
        self
    }

    pub fn with_y(mut self, ky: [i32; 2]) -> Self {
        self.y = ky;
        self
    }

    pub fn with_t(mut self, tf: f64) -> Self {
        self.t = tf;
        self
    }

    #[inline]
    fn phase(&self, t: f64, x: &Point, y: &Point) -> f64 {
        let arg = self.t * t
            + f64::from(self.x[0]) * x[0]
            + f64::from(self.x[1]) * x[1]
            + f64::from(self.y[0]) * y[0]
            + f64::from(self.y[1]) * y[1];
        TAU * arg
    }

    #[inline]
    fn eval(&self, t: f64, x: &Point, y: &Point) -> f64 {
        let phase = self.phase(t, x, y);
        match self.wave {
            Wave::Sin => self.amp * libm::sin(phase),
            Wave::Cos => self.amp * libm::cos(phase),
        }
    }

    fn x_norm(&self) -> f64 {
        libm::hypot(f64::from(self.x[0]), f64::from(self.x[1]))
    }

    fn y_norm(&self) -> f64 {
        libm::hypot(f64::from(self.y[0]), f64::from(self.y[1]))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    #[default]
    Linear,
    Sqrt,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub envelope: Envelope,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl CoefficientField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { offset: c, ..Self::default() }
    }

    /// `sqrt(inner)`; the inner polynomial must stay nonnegative.
    pub fn sqrt_of(inner: CoefficientField) -> Self {
        Self { envelope: Envelope::Sqrt, ..inner }
    }

    pub fn term(mut self, term: TrigTerm) -> Self {
        self.terms.push(term);
        self
    }

    /// Value of the trigonometric polynomial before the envelope is applied.
    #[inline]
    pub fn inner(&self, t: f64, x: &Point, y: &Point) -> f64 {
        self.terms.iter().fold(self.offset, |acc, term| acc + term.eval(t, x, y))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &Point, y: &Point) -> f64 {
        let g = self.inner(t, x, y);
        match self.envelope {
            Envelope::Linear => g,
            // inner() >= 0 is a validated invariant; clamp roundoff below zero.
            Envelope::Sqrt => libm::sqrt(g.max(0.0)),
        }
    }

    fn amp_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.amp.abs()).sum()
    }

    /// Guaranteed lower bound of the inner polynomial.
    pub fn inner_lower_bound(&self) -> f64 {
        self.offset - self.amp_sum()
    }

    /// Guaranteed upper bound of the inner polynomial.
    pub fn inner_upper_bound(&self) -> f64 {
        self.offset + self.amp_sum()
    }

    /// Guaranteed bound on `sup |g|` over all arguments.
    pub fn sup_bound(&self) -> f64 {
        match self.envelope {
            Envelope::Linear => self.offset.abs() + self.amp_sum(),
            Envelope::Sqrt => libm::sqrt(self.inner_upper_bound().max(0.0)),
        }
    }

    /// Guaranteed lower bound of the field value.
    pub fn lower_bound(&self) -> f64 {
        match self.envelope {
            Envelope::Linear => self.inner_lower_bound(),
            Envelope::Sqrt => libm::sqrt(self.inner_lower_bound().max(0.0)),
        }
    }

    fn lipschitz_by(&self, norm: impl Fn(&TrigTerm) -> f64) -> f64 {
        let inner: f64 = self.terms.iter().map(|t| t.amp.abs() * TAU * norm(t)).sum();
        match self.envelope {
            Envelope::Linear => inner,
            Envelope::Sqrt => {
                if inner == 0.0 {
                    0.0
                } else {
                    let floor = self.inner_lower_bound();
                    if floor <= 0.0 {
                        f64::INFINITY
                    } else {
                        inner / (2.0 * libm::sqrt(floor))
                    }
                }
            }
        }
    }

    /// Lipschitz bound in the slow variable `x` (Euclidean metric).
    pub fn lipschitz_x(&self) -> f64 {
        self.lipschitz_by(TrigTerm::x_norm)
    }

    /// Lipschitz bound in the fast variable `y`.
    pub fn lipschitz_y(&self) -> f64 {
        self.lipschitz_by(TrigTerm::y_norm)
    }

    pub fn depends_on_t(&self) -> bool {
        self.terms.iter().any(|t| t.t != 0.0)
    }

    pub fn depends_on_x(&self) -> bool {
        self.terms.iter().any(|t| t.x != [0, 0])
    }

    pub fn depends_on_y(&self) -> bool {
        self.terms.iter().any(|t| t.y != [0, 0])
    }

    /// True when the field is the constant zero (exactly).
    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.terms.iter().all(|t| t.amp == 0.0)
    }

    /// Sum of two linear fields (term lists are concatenated).
    ///
    /// # Panics
    /// Panics if either field carries a square-root envelope.
    pub fn plus(&self, other: &CoefficientField) -> CoefficientField {
        assert!(
            self.envelope == Envelope::Linear && other.envelope == Envelope::Linear,
            "only linear fields can be added"
        );
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        CoefficientField { offset: self.offset + other.offset, envelope: Envelope::Linear, terms }
    }

    /// Exact check that a sum of linear fields vanishes identically: terms are
    /// grouped by (wave, frequencies) and their amplitudes must cancel.
    pub fn sum_vanishes<'a>(fields: impl IntoIterator<Item = &'a CoefficientField>) -> bool {
        let mut offset = 0.0;
        let mut groups: Vec<(Wave, u64, [i32; 2], [i32; 2], f64)> = Vec::new();
        for f in fields {
            if f.envelope != Envelope::Linear {
                return false;
            }
            offset += f.offset;
            for term in &f.terms {
                let key = (term.wave, term.t.to_bits(), term.x, term.y);
                match groups
                    .iter_mut()
                    .find(|g| (g.0, g.1, g.2, g.3) == key)
                {
                    Some(g) => g.4 += term.amp,
                    None => groups.push((key.0, key.1, key.2, key.3, term.amp)),
                }
            }
        }
        // cos(0) and sin(0) terms are constants in disguise
        for g in &groups {
            if g.1 == 0 && g.2 == [0, 0] && g.3 == [0, 0] {
                if g.0 == Wave::Cos {
                    offset += g.4;
                }
                continue;
            }
            if g.4.abs() > 1e-14 {
                return false;
            }
        }
        offset.abs() <= 1e-14
    }
}

/// `sin(2 pi k . x)` as a field; used for initial data.
pub fn sin_x(amp: f64, kx: [i32; 2]) -> CoefficientField {
    CoefficientField::zero().term(TrigTerm::new(amp, Wave::Sin).with_x(kx))
}

pub fn cos_x(amp: f64, kx: [i32; 2]) -> CoefficientField {
    CoefficientField::zero().term(TrigTerm::new(amp, Wave::Cos).with_x(kx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_envelope_evaluates_exactly() {
        let a = CoefficientField::sqrt_of(
            CoefficientField::constant(2.0).term(TrigTerm::new(1.0, Wave::Sin).with_y([1, 0])),
        );
        let v = a.eval(0.0, &[0.3, 0.0], &[0.25, 0.0]);
        assert!((v * v - 3.0).abs() < 1e-15);
        assert!((a.sup_bound() - libm::sqrt(3.0)).abs() < 1e-15);
        assert!((a.lower_bound() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_in_x_and_y() {
        let f = CoefficientField::constant(0.5)
            .term(TrigTerm::new(0.3, Wave::Cos).with_x([2, -1]).with_y([0, 3]))
            .term(TrigTerm::new(-0.2, Wave::Sin).with_x([1, 0]).with_t(0.7));
        let x = [0.123, 0.456];
        let y = [0.789, 0.012];
        let base = f.eval(0.4, &x, &y);
        for (dx, dy) in [([1.0, 0.0], [0.0, 0.0]), ([0.0, 1.0], [0.0, 1.0]), ([0.0, 0.0], [1.0, 0.0])] {
            let shifted = f.eval(0.4, &[x[0] + dx[0], x[1] + dx[1]], &[y[0] + dy[0], y[1] + dy[1]]);
            assert!((shifted - base).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_dominates_difference_quotients() {
        let f = CoefficientField::constant(0.0)
            .term(TrigTerm::new(0.25, Wave::Cos).with_x([1, 0]))
            .term(TrigTerm::new(0.1, Wave::Sin).with_x([3, 0]));
        let lip = f.lipschitz_x();
        for k in 0..200 {
            let x = k as f64 / 200.0;
            let q = (f.eval(0.0, &[x + 1e-6, 0.0], &[0.0; 2]) - f.eval(0.0, &[x, 0.0], &[0.0; 2])) / 1e-6;
            assert!(q.abs() <= lip + 1e-6);
        }
    }

    #[test]
    fn generator_row_sums_vanish_exactly() {
        let d11 = CoefficientField::constant(1.0).term(TrigTerm::new(0.5, Wave::Cos).with_x([1, 0]));
        let d12 = CoefficientField::constant(-1.0).term(TrigTerm::new(-0.5, Wave::Cos).with_x([1, 0]));
        assert!(CoefficientField::sum_vanishes([&d11, &d12]));
        let off = CoefficientField::constant(-0.9);
        assert!(!CoefficientField::sum_vanishes([&d11, &off]));
    }
}
