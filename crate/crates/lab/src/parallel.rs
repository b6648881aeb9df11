use homlab_core::exec::Executor;
use rayon::prelude::*;

/// Executes slots on the current rayon pool. Each slot is computed on its
/// own, so results match [`homlab_core::exec::Sequential`] bit for bit.
#[derive(Clone, Copy, Debug, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn fill(&self, out: &mut [f64], f: &(dyn Fn(usize) -> f64 + Sync)) {
        out.par_iter_mut().with_min_len(64).enumerate().for_each(|(k, slot)| *slot = f(k));
    }

    fn map<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use homlab_core::exec::Sequential;

    #[test]
    fn matches_sequential() {
        let f = |k: usize| (k as f64).sin() * 1e3;
        let mut a = vec![0.0; 1000];
        let mut b = vec![0.0; 1000];
        RayonExecutor.fill(&mut a, &f);
        Sequential.fill(&mut b, &f);
        assert_eq!(a, b);
        assert_eq!(RayonExecutor.map(100, &|k| k * k), Sequential.map(100, &|k| k * k));
    }
}
