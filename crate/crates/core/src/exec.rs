//! Pluggable execution of independent, indexed work items.
//!
//! Every implementation must write item `k` into slot `k`, so results never
//! depend on how work is scheduled.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// `out[k] = f(k)` for every slot.
    fn fill(&self, out: &mut [f64], f: &(dyn Fn(usize) -> f64 + Sync));

    /// `[f(0), ..., f(n-1)]`, in index order.
    fn map<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn fill(&self, out: &mut [f64], f: &(dyn Fn(usize) -> f64 + Sync)) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = f(k);
        }
    }

    fn map<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).map(f).collect()
    }
}
