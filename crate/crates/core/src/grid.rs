//! Uniform periodic grids, time grids and m-component grid functions with
//! the discrete norms used by every estimate.

use crate::sampling::SampleRng;
use crate::scenario::{CoefficientField, Point};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least 4 nodes per axis, got {0}")]
    TooCoarse(usize),
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("grid mismatch")]
    GridMismatch,
    #[error("non-nested grids: {fine} is not a multiple of {coarse}")]
    NotNested { fine: usize, coarse: usize },
    #[error("component count mismatch: {0} vs {1}")]
    ComponentMismatch(usize, usize),
    #[error("non-finite value in grid function")]
    NonFinite,
    #[error("time grid needs t_final >= 0 and a positive step")]
    BadTimeGrid,
}

/// Uniform periodic grid on the unit torus with `n` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceGrid {
    dim: usize,
    n: usize,
}

impl SpaceGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::BadDimension(dim));
        }
        if n < 4 {
            return Err(GridError::TooCoarse(n));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Spacing `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.n, idx / self.n]
    }

    #[inline]
    pub fn flat_index(&self, k: [usize; 2]) -> usize {
        k[0] + self.n * k[1]
    }

    /// Node coordinates `k / n`.
    #[inline]
    pub fn coords(&self, idx: usize) -> Point {
        let k = self.multi_index(idx);
        [k[0] as f64 / self.n as f64, k[1] as f64 / self.n as f64]
    }

    /// Periodic neighbour of `idx` shifted by `offset` along `axis`.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut k = self.multi_index(idx);
        let n = self.n as isize;
        k[axis] = ((k[axis] as isize + offset).rem_euclid(n)) as usize;
        self.flat_index(k)
    }

    /// Flat index of the node shifted by the integer vector `offset`.
    pub fn shifted(&self, idx: usize, offset: [isize; 2]) -> usize {
        let mut k = self.multi_index(idx);
        let n = self.n as isize;
        for axis in 0..self.dim {
            k[axis] = ((k[axis] as isize + offset[axis]).rem_euclid(n)) as usize;
        }
        self.flat_index(k)
    }
}

/// Minimal-image displacement `x - y` on the unit torus.
pub fn torus_displacement(x: &Point, y: &Point, dim: usize) -> [f64; 2] {
    let mut d = [0.0; 2];
    for k in 0..dim {
        let mut v = x[k] - y[k];
        v -= libm::round(v);
        d[k] = v;
    }
    d
}

pub fn torus_distance(x: &Point, y: &Point, dim: usize) -> f64 {
    let d = torus_displacement(x, y, dim);
    libm::hypot(d[0], d[1])
}

/// Uniform time grid; `dt * steps` reproduces `t_final` up to rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Smallest step count that is a multiple of `multiple` and keeps the
    /// step at or below `dt_max`.
    pub fn new(t_final: f64, dt_max: f64, multiple: usize) -> Result<Self, GridError> {
        if !(t_final >= 0.0) || !(dt_max > 0.0) || multiple == 0 {
            return Err(GridError::BadTimeGrid);
        }
        if t_final == 0.0 {
            return Ok(Self { t_final, dt: 0.0, steps: 0 });
        }
        let raw = libm::ceil(t_final / dt_max).max(1.0) as usize;
        let steps = raw.div_ceil(multiple) * multiple;
        let mut dt = t_final / steps as f64;
        // never exceed dt_max through rounding
        if dt > dt_max {
            dt = dt_max;
        }
        Ok(Self { t_final, dt, steps })
    }

    /// Time of step `n`, exact at `n = steps`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }
}

/// `m` component arrays over the nodes of a [`SpaceGrid`] at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: SpaceGrid,
    t: f64,
    values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceNorms {
    pub sup: f64,
    pub per_component: Vec<f64>,
}

/// Hölder seminorm value, flagged when only a subset of node pairs was
/// enumerated (the value is then a lower bound).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderEstimate {
    pub value: f64,
    pub sampled: bool,
}

impl GridFunction {
    pub fn zeros(grid: SpaceGrid, m: usize, t: f64) -> Self {
        Self { grid, t, values: vec![vec![0.0; grid.len()]; m] }
    }

    pub fn from_values(grid: SpaceGrid, t: f64, values: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if values.iter().any(|c| c.len() != grid.len()) {
            return Err(GridError::GridMismatch);
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { grid, t, values })
    }

    pub fn from_fn(grid: SpaceGrid, m: usize, t: f64, mut f: impl FnMut(usize, Point) -> f64) -> Self {
        let values = (0..m)
            .map(|i| (0..grid.len()).map(|idx| f(i, grid.coords(idx))).collect())
            .collect();
        Self { grid, t, values }
    }

    /// Node sampling of x-only fields (initial data).
    pub fn sample_fields(grid: SpaceGrid, fields: &[CoefficientField], t: f64) -> Self {
        Self::from_fn(grid, fields.len(), t, |i, x| fields[i].eval(t, &x, &[0.0; 2]))
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            t: self.t,
            values: self.values.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// `max_i max_x |u_i(x)|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Largest oscillation `max - min` over components.
    pub fn oscillation(&self) -> f64 {
        self.values
            .iter()
            .map(|c| {
                let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Hölder seminorm with the torus metric, seed 0.
    pub fn holder_seminorm(&self, mu: f64) -> f64 {
        self.holder_seminorm_seeded(mu, 0).value
    }

    /// Hölder seminorm with the torus metric.
    ///
    /// In 1D (and on 2D grids with at most 1024 nodes) every node pair is
    /// enumerated. Larger 2D grids scan every node against a fixed set of
    /// offsets: all offsets with sup-norm at most 4 plus 256 seeded random
    /// offsets; the result is then a lower bound and flagged as sampled.
    pub fn holder_seminorm_seeded(&self, mu: f64, seed: u64) -> HolderEstimate {
        let grid = self.grid;
        let n = grid.n() as isize;
        let h = grid.h();
        let mut offsets: Vec<[isize; 2]> = Vec::new();
        let sampled;
        if grid.dim() == 1 {
            offsets.extend((1..=n / 2).map(|d| [d, 0]));
            sampled = false;
        } else if grid.len() <= 1024 {
            for d1 in 0..=n / 2 {
                for d0 in -(n / 2) + 1..=n / 2 {
                    if d1 == 0 && d0 <= 0 {
                        continue;
                    }
                    offsets.push([d0, d1]);
                }
            }
            sampled = false;
        } else {
            for d1 in 0..=4 {
                for d0 in -4..=4 {
                    if d1 == 0 && d0 <= 0 {
                        continue;
                    }
                    offsets.push([d0, d1]);
                }
            }
            let mut rng = SampleRng::new(seed);
            for _ in 0..256 {
                let d0 = rng.index(n as usize) as isize - n / 2;
                let d1 = rng.index(n as usize / 2 + 1) as isize;
                if d0 != 0 || d1 != 0 {
                    offsets.push([d0, d1]);
                }
            }
            sampled = true;
        }
        let mut best: f64 = 0.0;
        for off in offsets {
            let dx = [off[0] as f64 * h, off[1] as f64 * h];
            let dist = torus_distance(&dx, &[0.0, 0.0], grid.dim());
            if dist == 0.0 {
                continue;
            }
            let scale = 1.0 / libm::pow(dist, mu);
            for comp in &self.values {
                for idx in 0..grid.len() {
                    let jdx = grid.shifted(idx, off);
                    best = best.max((comp[idx] - comp[jdx]).abs() * scale);
                }
            }
        }
        HolderEstimate { value: best, sampled }
    }

    /// Componentwise and global sup of `|u - v|`.
    pub fn difference_norms(&self, other: &GridFunction) -> Result<DifferenceNorms, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        if self.m() != other.m() {
            return Err(GridError::ComponentMismatch(self.m(), other.m()));
        }
        let per_component: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs())))
            .collect();
        let sup = per_component.iter().copied().fold(0.0, f64::max);
        Ok(DifferenceNorms { sup, per_component })
    }

    /// Pointwise injection onto a coarser nested grid.
    pub fn restrict(&self, coarse: SpaceGrid) -> Result<GridFunction, GridError> {
        let fine = self.grid;
        if coarse.dim() != fine.dim() {
            return Err(GridError::GridMismatch);
        }
        if fine.n() % coarse.n() != 0 {
            return Err(GridError::NotNested { fine: fine.n(), coarse: coarse.n() });
        }
        let ratio = fine.n() / coarse.n();
        let values = self
            .values
            .iter()
            .map(|comp| {
                (0..coarse.len())
                    .map(|idx| {
                        let k = coarse.multi_index(idx);
                        comp[fine.flat_index([k[0] * ratio, k[1] * ratio])]
                    })
                    .collect()
            })
            .collect();
        Ok(GridFunction { grid: coarse, t: self.t, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::TAU;
    use proptest::prelude::*;

    fn g1(n: usize) -> SpaceGrid {
        SpaceGrid::new(1, n).unwrap()
    }

    #[test]
    fn grid_preconditions() {
        assert_eq!(SpaceGrid::new(1, 3), Err(GridError::TooCoarse(3)));
        assert_eq!(SpaceGrid::new(3, 8), Err(GridError::BadDimension(3)));
        let g = SpaceGrid::new(2, 8).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.h() * 8.0, 1.0);
        assert_eq!(g.neighbor(0, 0, -1), 7);
        assert_eq!(g.neighbor(0, 1, -1), 56);
    }

    #[test]
    fn sup_norm_examples() {
        let g = g1(64);
        assert_eq!(GridFunction::zeros(g, 2, 0.0).sup_norm(), 0.0);
        let u = GridFunction::from_fn(g, 2, 0.0, |i, x| {
            if i == 0 {
                libm::sin(TAU * x[0])
            } else {
                libm::cos(TAU * x[0])
            }
        });
        assert!((u.sup_norm() - 1.0).abs() < 1e-15);
        let c = GridFunction::from_fn(g1(17), 1, 0.0, |_, _| 3.0);
        assert_eq!(c.sup_norm(), 3.0);
    }

    /// Dense pair enumeration on a refined grid, independent of the offset
    /// loop used by `holder_seminorm`.
    fn brute_force_holder(n: usize, mu: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut best: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let x = a as f64 / n as f64;
                let y = b as f64 / n as f64;
                let mut d = (x - y).abs();
                d = d.min(1.0 - d);
                best = best.max((f(x) - f(y)).abs() / d.powf(mu));
            }
        }
        best
    }

    #[test]
    fn holder_of_sine_approaches_two_pi() {
        let oracle = brute_force_holder(1024, 1.0, |x| libm::sin(TAU * x));
        assert!((oracle - TAU).abs() < 1e-4);
        let u = GridFunction::from_fn(g1(256), 1, 0.0, |_, x| libm::sin(TAU * x[0]));
        let v = u.holder_seminorm(1.0);
        assert!((v - TAU).abs() < 1e-2, "{v}");
        let direct = brute_force_holder(256, 1.0, |x| libm::sin(TAU * x));
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn holder_of_constant_is_zero_and_scales_linearly() {
        let g = g1(32);
        assert_eq!(GridFunction::from_fn(g, 1, 0.0, |_, _| 2.5).holder_seminorm(0.5), 0.0);
        let u = GridFunction::from_fn(g, 1, 0.0, |_, x| libm::cos(TAU * x[0]) + 0.3 * libm::sin(2.0 * TAU * x[0]));
        let s1 = u.holder_seminorm(0.7);
        let s2 = u.map(|v| 2.0 * v).holder_seminorm(0.7);
        assert!((s2 - 2.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn holder_2d_exact_and_sampled() {
        let small = SpaceGrid::new(2, 16).unwrap();
        let u = GridFunction::from_fn(small, 1, 0.0, |_, x| libm::sin(TAU * x[0]) * libm::cos(TAU * x[1]));
        let e = u.holder_seminorm_seeded(1.0, 0);
        assert!(!e.sampled);
        let big = SpaceGrid::new(2, 64).unwrap();
        let w = GridFunction::from_fn(big, 1, 0.0, |_, x| libm::sin(TAU * x[0]) * libm::cos(TAU * x[1]));
        let s = w.holder_seminorm_seeded(1.0, 5);
        assert!(s.sampled);
        assert!(s.value <= TAU + 1e-9 && s.value > 0.9 * TAU);
        assert_eq!(s, w.holder_seminorm_seeded(1.0, 5));
    }

    #[test]
    fn difference_norms_examples() {
        let g = g1(16);
        let u = GridFunction::from_fn(g, 2, 0.0, |i, x| i as f64 + x[0]);
        assert_eq!(u.difference_norms(&u).unwrap().sup, 0.0);
        let v = GridFunction::from_fn(g, 2, 0.0, |i, x| i as f64 + x[0] + if i == 0 { 0.125 } else { 0.0 });
        let d = u.difference_norms(&v).unwrap();
        assert_eq!(d.sup, 0.125);
        assert_eq!(d.per_component, vec![0.125, 0.0]);
        assert_eq!(v.difference_norms(&u).unwrap(), d);
        let w = GridFunction::zeros(g1(32), 2, 0.0);
        assert_eq!(u.difference_norms(&w), Err(GridError::GridMismatch));
    }

    #[test]
    fn restrict_examples() {
        let fine = GridFunction::from_fn(g1(128), 1, 0.0, |_, x| x[0]);
        let coarse = fine.restrict(g1(64)).unwrap();
        for k in 0..64 {
            assert_eq!(coarse.component(0)[k], fine.component(0)[2 * k]);
        }
        let c = GridFunction::from_fn(g1(128), 1, 0.0, |_, _| 4.0).restrict(g1(32)).unwrap();
        assert!(c.component(0).iter().all(|&v| v == 4.0));
        let twice = fine.restrict(g1(64)).unwrap().restrict(g1(16)).unwrap();
        assert_eq!(twice, fine.restrict(g1(16)).unwrap());
        assert_eq!(fine.restrict(g1(48)), Err(GridError::NotNested { fine: 128, coarse: 48 }));
    }

    #[test]
    fn time_grid_hits_horizon() {
        let tg = TimeGrid::new(0.1, 1.0 / (2.0 * 128.0 * 128.0), 64).unwrap();
        assert_eq!(tg.steps % 64, 0);
        assert!(tg.dt <= 1.0 / (2.0 * 128.0 * 128.0));
        assert!((tg.dt * tg.steps as f64 - 0.1).abs() <= 2.0 * f64::EPSILON * 0.1 * tg.steps as f64);
        assert_eq!(tg.time(tg.steps), 0.1);
    }

    fn grid_fn_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (prop::collection::vec(-5.0f64..5.0, 32), prop::collection::vec(-5.0f64..5.0, 32))
    }

    proptest! {
        #[test]
        fn norms_are_seminorms((a, b) in grid_fn_strategy(), c in -3.0f64..3.0, mu in 0.1f64..1.0) {
            let g = g1(32);
            let u = GridFunction::from_values(g, 0.0, vec![a]).unwrap();
            let v = GridFunction::from_values(g, 0.0, vec![b]).unwrap();
            let sum = GridFunction::from_values(
                g, 0.0, vec![u.component(0).iter().zip(v.component(0)).map(|(x, y)| x + y).collect()]).unwrap();
            prop_assert!(sum.sup_norm() <= u.sup_norm() + v.sup_norm() + 1e-12);
            prop_assert!(sum.holder_seminorm(mu) <= u.holder_seminorm(mu) + v.holder_seminorm(mu) + 1e-9);
            prop_assert!((u.map(|x| c * x).sup_norm() - c.abs() * u.sup_norm()).abs() < 1e-12);
            prop_assert!((u.map(|x| c * x).holder_seminorm(mu) - c.abs() * u.holder_seminorm(mu)).abs() < 1e-9);
            prop_assert!(u.restrict(g1(8)).unwrap().sup_norm() <= u.sup_norm());
        }

        #[test]
        fn holder_nonincreasing_in_mu(a in prop::collection::vec(-0.5f64..0.5, 32), m1 in 0.05f64..1.0, m2 in 0.05f64..1.0) {
            let u = GridFunction::from_values(g1(32), 0.0, vec![a]).unwrap();
            let (lo, hi) = if m1 < m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(u.holder_seminorm(hi) + 1e-12 >= u.holder_seminorm(lo));
        }
    }
}
