//! Small dense helpers, deterministic reductions and a matrix-free
//! conjugate-gradient driver.

use rayon::prelude::*;

use crate::error::{LabError, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Block length for chunked parallel reductions. Fixed so that results do
/// not depend on the number of worker threads.
const REDUCE_CHUNK: usize = 4096;

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Frobenius norm squared of a 3×3 matrix.
#[inline]
pub fn frob2(m: &Mat3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum()
}

/// Recursive pairwise summation; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Evaluates `f(0..n)` in parallel and reduces with [`pairwise_sum`].
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let terms: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    pairwise_sum(&terms)
}

/// Deterministic parallel dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    pairwise_sum(&partial)
}

pub fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Determinants of the leading principal minors of the top-left `n×n` block.
pub fn leading_minors(m: &Mat3, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    out.push(m[0][0]);
    if n >= 2 {
        out.push(det2(&[[m[0][0], m[0][1]], [m[1][0], m[1][1]]]));
    }
    if n >= 3 {
        out.push(det3(m));
    }
    out
}

/// Number of eigenvalues of the symmetric `n×n` block strictly below
/// `lambda`, counted as negative pivots of the LDLᵀ factorisation of
/// `m - lambda I` (Sylvester's law of inertia). The pivots are ratios of
/// consecutive leading minors of the characteristic matrix.
pub fn count_eigenvalues_below(m: &Mat3, n: usize, lambda: f64) -> usize {
    let mut a = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = m[i][j] - if i == j { lambda } else { 0.0 };
        }
    }
    let scale = a.iter().flatten().fold(1.0_f64, |s, x| s.max(x.abs()));
    let mut negatives = 0;
    // in-place symmetric elimination
    for k in 0..n {
        let mut pivot = a[k][k];
        if pivot == 0.0 {
            pivot = -f64::EPSILON * scale;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in (k + 1)..n {
            let l = a[i][k] / pivot;
            for j in (k + 1)..n {
                a[i][j] -= l * a[k][j];
            }
        }
    }
    negatives
}

/// Smallest eigenvalue of the symmetric `n×n` block by bisection on the
/// inertia count.
pub fn smallest_eigenvalue(m: &Mat3, n: usize) -> f64 {
    let mut radius: f64 = 0.0;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
        radius = radius.max(m[i][i].abs() + off);
    }
    let (mut lo, mut hi) = (-radius - 1.0, radius + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_eigenvalues_below(m, n, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + radius) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator given matrix-free.
///
/// `apply(x, y)` must overwrite `y` with `A x`. Entries where `inv_diag` is
/// zero are treated as fixed (their residual is ignored and their update is
/// zero), which lets callers keep constrained nodes inside the vector.
pub fn conjugate_gradient<A>(
    apply: A,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b
        .par_iter()
        .zip(ax.par_iter())
        .zip(inv_diag.par_iter())
        .map(|((bi, ai), d)| if *d == 0.0 { 0.0 } else { bi - ai })
        .collect();
    let masked_b: Vec<f64> = b
        .par_iter()
        .zip(inv_diag.par_iter())
        .map(|(bi, d)| if *d == 0.0 { 0.0 } else { *bi })
        .collect();
    let b_norm = dot(&masked_b, &masked_b).sqrt();
    if b_norm == 0.0 {
        x.par_iter_mut().zip(inv_diag.par_iter()).for_each(|(xi, d)| {
            if *d != 0.0 {
                *xi = 0.0
            }
        });
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut z: Vec<f64> = r.par_iter().zip(inv_diag.par_iter()).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while rel > tol {
        if it >= max_iter {
            return Err(LabError::NoConvergence {
                residual: rel,
                iterations: it,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(LabError::NoConvergence {
                residual: rel,
                iterations: it,
            });
        }
        let step = rz / pap;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += step * pi);
        r.par_iter_mut()
            .zip(ap.par_iter())
            .zip(inv_diag.par_iter())
            .for_each(|((ri, api), d)| {
                if *d != 0.0 {
                    *ri -= step * api
                }
            });
        z.par_iter_mut()
            .zip(r.par_iter())
            .zip(inv_diag.par_iter())
            .for_each(|((zi, ri), d)| *zi = ri * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
        rel = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    Ok(CgOutcome {
        iterations: it,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn inertia_count_on_diagonal() {
        let m = [[1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 3.0]];
        assert_eq!(count_eigenvalues_below(&m, 3, 0.0), 1);
        assert_eq!(count_eigenvalues_below(&m, 3, 2.0), 2);
        assert_eq!(count_eigenvalues_below(&m, 3, 10.0), 3);
        assert!((smallest_eigenvalue(&m, 3) + 2.0).abs() < 1e-12);
        assert!((smallest_eigenvalue(&m, 2) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn smallest_eigenvalue_matches_nalgebra() {
        let m = [[2.0, -0.3, 0.7], [-0.3, 1.0, 0.2], [0.7, 0.2, 0.5]];
        let na = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
        let oracle = na.symmetric_eigen().eigenvalues.min();
        assert!((smallest_eigenvalue(&m, 3) - oracle).abs() < 1e-12);
    }

    #[test]
    fn cg_solves_tridiagonal_system() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let inv = vec![0.5; n];
        let out = conjugate_gradient(apply, &inv, &b, &mut x, 1e-12, 500).unwrap();
        assert!(out.relative_residual <= 1e-12);
        // exact solution x_i = (i+1)(n-i)/2
        for (i, xi) in x.iter().enumerate() {
            let exact = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((xi - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn cg_reports_no_convergence() {
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = (i + 1) as f64 * x[i];
            }
        };
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        let inv = vec![1.0; 20];
        let err = conjugate_gradient(apply, &inv, &b, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, LabError::NoConvergence { iterations: 2, .. }));
    }
}
