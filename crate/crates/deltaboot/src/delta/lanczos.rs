//! Matrix-free symmetric eigensolver.
//!
//! A Lanczos iteration with full reorthogonalization (classical
//! Gram-Schmidt applied twice per step) builds an orthonormal Krylov basis;
//! the projected tridiagonal problem is solved by an implicit-shift QL
//! routine. When the iteration breaks down (the next Krylov vector falls
//! inside the current span, which is routine once the basis captures an
//! invariant subspace) the basis is extended with a fresh random direction
//! and the tridiagonal matrix gets a zero coupling. That restart is what
//! lets the solver enumerate eigenvalue multiplicities (a curvature operator
//! has many eigenvalues tied at its shift) and run all the way to a complete
//! eigendecomposition when asked for every pair.
//!
//! Every returned pair carries an explicitly recomputed residual
//! `|A v - value v|`; the solver refuses to report convergence it cannot
//! demonstrate.

use crate::delta::EigenPairs;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Anything that can act as a symmetric linear operator on flat vectors.
pub trait MatVec: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Breakdown threshold relative to the operator scale seen so far.
const BREAKDOWN_REL: f64 = 1e-12;

/// Steps between convergence checks once enough basis vectors exist.
const CHECK_EVERY: usize = 16;

/// Compute the `k` largest eigenpairs of a symmetric operator.
///
/// `seed` fixes the random start (and restart) vectors, `tol` bounds the
/// accepted residual as `tol * max(value_1, 1)`, and `max_iters` caps the
/// number of operator applications spent building the basis. On failure to
/// converge the partial result rides along in the error so callers can
/// inspect how far the iteration got.
pub fn lanczos_topk<A: MatVec>(
    op: &A,
    k: usize,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> Result<EigenPairs> {
    let p = op.dim();
    if k == 0 || k > p {
        return Err(Error::Config(format!(
            "requested {k} eigenpairs of a dimension-{p} operator"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }

    let mut rng = rng_from_seed(seed);
    let mut basis: Vec<Vec<f64>> = vec![fresh_direction(&mut rng, &[], p)?];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut scale = 1.0f64;
    let mut retry_after = 0usize;

    loop {
        let j = alpha.len();
        let mut w = op.apply(&basis[j]);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        scale = scale.max(a.abs());
        axpy(&mut w, -a, &basis[j]);
        if j > 0 {
            axpy(&mut w, -beta[j - 1], &basis[j - 1]);
        }
        for _ in 0..2 {
            let cs: Vec<f64> = basis.iter().map(|q| dot(q, &w)).collect();
            for (q, &c) in basis.iter().zip(&cs) {
                axpy(&mut w, -c, q);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                what: "Lanczos recurrence".into(),
                step: m as u64,
            });
        }

        let exhausted = m == p || m >= max_iters;
        if exhausted || (m >= k.max(retry_after) && m % CHECK_EVERY == 0) {
            let (theta, last) = solve_tridiagonal_last_row(&alpha, &beta)?;
            let order = descending_order(&theta);
            let top = &order[..k.min(m)];
            let theta_max = theta[order[0]].max(1.0);
            let estimates_ok = k <= m
                && top
                    .iter()
                    .all(|&idx| (b * last[idx]).abs() <= 0.5 * tol * theta_max);
            if estimates_ok || exhausted {
                let (full_theta, s) = solve_tridiagonal(&alpha, &beta)?;
                debug_assert_eq!(theta, full_theta);
                let result = finalize(op, &basis, &full_theta, &s, top, tol, k);
                // A failed estimate-driven attempt is not fatal while the
                // basis can still grow, but assembling Ritz vectors is costly,
                // so let the basis grow a while before trying again.
                if result.is_ok() || exhausted {
                    return result;
                }
                retry_after = m + (k / 8).max(32);
            }
        }

        let next = if b <= BREAKDOWN_REL * scale.max(1.0) {
            beta.push(0.0);
            fresh_direction(&mut rng, &basis, p)?
        } else {
            beta.push(b);
            w.iter().map(|v| v / b).collect()
        };
        basis.push(next);
    }
}

/// Random unit vector orthogonalized against the existing basis.
fn fresh_direction(
    rng: &mut rand_chacha::ChaCha8Rng,
    basis: &[Vec<f64>],
    p: usize,
) -> Result<Vec<f64>> {
    for _ in 0..32 {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..2 {
            let cs: Vec<f64> = basis.iter().map(|q| dot(q, &v)).collect();
            for (q, &c) in basis.iter().zip(&cs) {
                axpy(&mut v, -c, q);
            }
        }
        let n = norm(&v);
        if n > 1e-8 * (p as f64).sqrt() {
            for vi in &mut v {
                *vi /= n;
            }
            return Ok(v);
        }
    }
    Err(Error::Config(
        "could not find a direction outside the Krylov basis".into(),
    ))
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite eigenvalues"));
    order
}

/// Assemble Ritz pairs, recompute their residuals against the operator, and
/// either return them or report how close the iteration got.
fn finalize<A: MatVec>(
    op: &A,
    basis: &[Vec<f64>],
    theta: &[f64],
    s: &[f64],
    top: &[usize],
    tol: f64,
    k: usize,
) -> Result<EigenPairs> {
    let p = op.dim();
    let m = theta.len();
    let got = top.len();
    let values: Vec<f64> = top.iter().map(|&idx| theta[idx]).collect();
    let mut vectors = vec![0.0; got * p];
    vectors
        .par_chunks_mut(p)
        .zip(top.par_iter())
        .for_each(|(dst, &idx)| {
            for (i, q) in basis.iter().take(m).enumerate() {
                axpy(dst, s[i * m + idx], q);
            }
        });

    let residuals: Vec<f64> = vectors
        .par_chunks(p)
        .zip(values.par_iter())
        .map(|(v, &val)| {
            let mut r = op.apply(v);
            axpy(&mut r, -val, v);
            norm(&r)
        })
        .collect();

    let theta_max = values.first().copied().unwrap_or(0.0).max(1.0);
    let bound = tol * theta_max;
    let converged = residuals.iter().filter(|&&r| r <= bound).count();
    let worst = residuals.iter().cloned().fold(0.0f64, f64::max);
    let pairs = EigenPairs::new(values, vectors, residuals, p)?;
    if got < k || pairs.residuals().iter().any(|&r| r > bound) {
        return Err(Error::LanczosNoConvergence {
            converged,
            requested: k,
            iters: m,
            worst_residual: worst,
            partial: Box::new(pairs),
        });
    }
    Ok(pairs)
}

/// Eigendecomposition of a symmetric tridiagonal matrix by the implicit-shift
/// QL method. `alpha` is the diagonal, `beta` the subdiagonal (one shorter).
/// Returns the eigenvalues (unsorted) and a row-major matrix whose column
/// `j` is the eigenvector for eigenvalue `j`.
fn solve_tridiagonal(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; m];
    e[..m - 1].copy_from_slice(&beta[..m - 1]);
    let mut z = vec![0.0; m * m];
    for i in 0..m {
        z[i * m + i] = 1.0;
    }
    tql2(&mut d, &mut e, &mut z, m)?;
    Ok((d, z))
}

/// Eigenvalues plus only the last row of the eigenvector matrix: the
/// component of each eigenvector along the newest Lanczos direction, which
/// is all the periodic convergence probe needs. Same rotation sequence as
/// [`solve_tridiagonal`] applied to a single row, so a probe costs O(m^2)
/// rather than O(m^3).
fn solve_tridiagonal_last_row(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; m];
    e[..m - 1].copy_from_slice(&beta[..m - 1]);
    let mut last = vec![0.0; m];
    last[m - 1] = 1.0;
    tql2(&mut d, &mut e, &mut last, m)?;
    Ok((d, last))
}

/// Implicit-shift QL with eigenvectors (EISPACK lineage). `d` holds the
/// diagonal, `e` the subdiagonal in `e[0..n-1]`; `z` is any row-major stack
/// of `n`-wide rows and each row accumulates the rotations. Starting from
/// the full identity yields the eigenvector matrix; starting from a single
/// identity row yields that row of it.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::Config(
                    "tridiagonal QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.chunks_exact_mut(n) {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
