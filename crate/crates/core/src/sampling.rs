//! Deterministic sampling: a seeded pseudo-random stream and a randomly
//! shifted Halton sequence for low-discrepancy suprema.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded pseudo-random stream. Identical seeds give identical streams on
/// every platform.
pub struct SampleRng(ChaCha8Rng);

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let inv = 1.0 / f64::from(base);
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton points in `[0,1)^dim` with a seeded Cranley-Patterson rotation.
pub struct Halton {
    dim: usize,
    index: u64,
    shift: Vec<f64>,
}

impl Halton {
    /// # Panics
    /// Panics when `dim` exceeds the number of tabulated prime bases (24).
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension {dim} too large");
        let shift = if seed == 0 {
            vec![0.0; dim]
        } else {
            let mut rng = SampleRng::new(seed);
            (0..dim).map(|_| rng.unit()).collect()
        };
        // skip the origin
        Self { dim, index: 1, shift }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (k, slot) in out.iter_mut().enumerate() {
            let v = radical_inverse(self.index, PRIMES[k]) + self.shift[k];
            *slot = if v >= 1.0 { v - 1.0 } else { v };
        }
        self.index += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn halton_is_deterministic_and_in_unit_cube() {
        let mut a = Halton::new(5, 42);
        let mut b = Halton::new(5, 42);
        let mut pa = [0.0; 5];
        let mut pb = [0.0; 5];
        for _ in 0..1000 {
            a.next_into(&mut pa);
            b.next_into(&mut pb);
            assert_eq!(pa, pb);
            assert!(pa.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn halton_fills_unit_interval_evenly() {
        let mut h = Halton::new(1, 0);
        let mut bins = [0usize; 8];
        let mut p = [0.0];
        for _ in 0..(8 * 64) {
            h.next_into(&mut p);
            bins[(p[0] * 8.0) as usize] += 1;
        }
        assert!(bins.iter().all(|&c| c.abs_diff(64) <= 1));
    }
}
