//! Small sparse solvers for the periodic cell problems.

use alloc::vec;
use alloc::vec::Vec;

/// Solves the periodic tridiagonal system
/// `lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]` (indices mod n)
/// with the Sherman-Morrison correction. Returns `None` on a zero pivot.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 3 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] = diag[0] - gamma;
    bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &bb, upper, rhs)?;
    let mut e = vec![0.0; n];
    e[0] = gamma;
    e[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &bb, upper, &e)?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom == 0.0 {
        return None;
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
    Some(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] - lower[k] * c[k - 1];
        if m == 0.0 {
            return None;
        }
        c[k] = upper[k] / m;
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / m;
    }
    let mut x = d;
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    Some(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Jacobi-preconditioned BiCGSTAB for `A x = b`, starting from `x`.
/// Stops when `max |b - A x| <= tol`.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut res = sup(&r);
    if res <= tol {
        return KrylovOutcome { iterations: 0, residual: res, converged: true };
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return KrylovOutcome { iterations: it, residual: res, converged: false };
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            y[k] = p[k] / diag[k];
        }
        apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if sup(&s) <= tol {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            return KrylovOutcome { iterations: it, residual: sup(&s), converged: true };
        }
        for k in 0..n {
            z[k] = s[k] / diag[k];
        }
        apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        res = sup(&r);
        if res <= tol {
            // recompute the true residual to guard against drift
            apply(x, &mut t);
            let true_res = (0..n).fold(0.0, |m: f64, k| m.max((b[k] - t[k]).abs()));
            if true_res <= tol {
                return KrylovOutcome { iterations: it, residual: true_res, converged: true };
            }
            for k in 0..n {
                r[k] = b[k] - t[k];
            }
            res = true_res;
        }
    }
    KrylovOutcome { iterations: max_iter, residual: res, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cyclic_apply(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|k| lower[k] * x[(k + n - 1) % n] + diag[k] * x[k] + upper[k] * x[(k + 1) % n]).collect()
    }

    proptest! {
        #[test]
        fn cyclic_solver_inverts_dominant_systems(
            off in prop::collection::vec(-1.0f64..1.0, 2..40),
            rhs_seed in -3.0f64..3.0,
        ) {
            let n = off.len().max(3);
            let lower: Vec<f64> = (0..n).map(|k| off[k % off.len()]).collect();
            let upper: Vec<f64> = (0..n).map(|k| -off[(k + 1) % off.len()] * 0.5).collect();
            let diag: Vec<f64> = (0..n).map(|k| 0.1 + lower[k].abs() + upper[k].abs()).collect();
            let rhs: Vec<f64> = (0..n).map(|k| rhs_seed * (k as f64).sin()).collect();
            let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
            let back = cyclic_apply(&lower, &diag, &upper, &x);
            for k in 0..n {
                prop_assert!((back[k] - rhs[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bicgstab_solves_shifted_periodic_laplacian() {
        let n = 16;
        let len = n * n;
        let at = |i: usize, j: usize| (i % n) + n * (j % n);
        let apply = |x: &[f64], out: &mut [f64]| {
            for j in 0..n {
                for i in 0..n {
                    let c = x[at(i, j)];
                    let lap = x[at(i + 1, j)] + x[at(i + n - 1, j)] + x[at(i, j + 1)] + x[at(i, j + n - 1)] - 4.0 * c;
                    out[at(i, j)] = 0.05 * c - lap * (1.0 + 0.5 * ((i + j) % 3) as f64);
                }
            }
        };
        let diag: Vec<f64> = (0..len).map(|k| 0.05 + 4.0 * (1.0 + 0.5 * ((k % n + k / n) % 3) as f64)).collect();
        let b: Vec<f64> = (0..len).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let mut x = vec![0.0; len];
        let out = bicgstab(apply, &diag, &b, &mut x, 1e-12, 2000);
        assert!(out.converged, "{out:?}");
        let mut ax = vec![0.0; len];
        apply(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12));
    }
}
