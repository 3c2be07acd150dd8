//! Curvature-based uncertainty for a trained classifier.
//!
//! The parameter covariance is modeled as `Sigma = G^{-1} / N` where
//! `G = (1/N) sum_n g_n g_n^T + lambda I` is the regularized outer-product
//! approximation built from per-example cost gradients. For a class output
//! with sensitivity row `f`, the predictive standard deviation is
//! `sigma = sqrt(f Sigma f^T)`.
//!
//! At realistic parameter counts `G` is never formed. [`OpgOperator`] exposes
//! it as a matrix-vector product, [`lanczos_topk`] extracts the dominant
//! eigenpairs, and [`sigma_from_projection`] evaluates the quadratic form
//! from those pairs plus a floor for the unexplored complement. Because every
//! eigenvalue of `G` is at least `lambda`, flooring the complement at
//! `lambda` overestimates the variance and flooring it at the smallest
//! computed eigenvalue underestimates it; the gap between the two is
//! reported as `epsilon`, a per-point truncation error bound.
//!
//! A dense route ([`sigma_delta_exact`]) factorizes `G` directly and is
//! capped at small parameter counts; it exists to cross-check the low-rank
//! route, not to replace it.

mod lanczos;

pub use lanczos::{lanczos_topk, MatVec};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{per_example_grad_into, sensitivity, DataView, NetworkSpec, ParamVector};

/// Hard ceiling on the parameter count for dense-matrix routes.
pub const DENSE_CAP: usize = 2000;

const MATVEC_CHUNK: usize = 2048;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-example cost gradients, one row per training example (N x P).
#[derive(Debug, Clone)]
pub struct GradMatrix {
    rows: Vec<f64>,
    n: usize,
    p: usize,
}

impl GradMatrix {
    /// Evaluate every training example's cost gradient at `params`.
    /// Examples are independent, so rows are filled in parallel.
    pub fn compute(spec: &NetworkSpec, params: &ParamVector, data: DataView<'_>) -> Self {
        let n = data.len();
        let p = spec.param_count();
        let mut rows = vec![0.0; n * p];
        rows.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
            per_example_grad_into(spec, params, data.input(i), data.label(i), row);
        });
        GradMatrix { rows, n, p }
    }

    pub fn from_rows(rows: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if rows.len() != n * p || n == 0 || p == 0 {
            return Err(Error::CountMismatch(format!(
                "gradient matrix of {} values cannot be {n} x {p}",
                rows.len()
            )));
        }
        Ok(GradMatrix { rows, n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    pub fn rows_flat(&self) -> &[f64] {
        &self.rows
    }
}

/// Matrix-free view of `G = (1/N) sum_n g_n g_n^T + lambda I`.
#[derive(Debug, Clone, Copy)]
pub struct OpgOperator<'a> {
    grads: &'a GradMatrix,
    lambda: f64,
}

impl<'a> OpgOperator<'a> {
    pub fn new(grads: &'a GradMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "curvature shift must be positive, got {lambda}"
            )));
        }
        Ok(OpgOperator { grads, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.grads.n
    }

    /// `y = (1/N) sum_n (g_n . x) g_n + lambda x`.
    ///
    /// The output is split into fixed chunks processed in parallel; each
    /// component is accumulated over examples in index order, so the result
    /// is identical for any thread count.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (n, p) = (self.grads.n, self.grads.p);
        assert_eq!(x.len(), p);
        let coeffs: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| dot(self.grads.row(i), x) / n as f64)
            .collect();
        let mut y = vec![0.0; p];
        y.par_chunks_mut(MATVEC_CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let j0 = ci * MATVEC_CHUNK;
                let width = chunk.len();
                for (i, &c) in coeffs.iter().enumerate() {
                    let row = &self.grads.rows[i * p + j0..i * p + j0 + width];
                    for (yj, gj) in chunk.iter_mut().zip(row) {
                        *yj += c * gj;
                    }
                }
                for (yj, &xj) in chunk.iter_mut().zip(&x[j0..j0 + width]) {
                    *yj += self.lambda * xj;
                }
            });
        y
    }
}

impl MatVec for OpgOperator<'_> {
    fn dim(&self) -> usize {
        self.grads.p
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
}

/// Dominant eigenpairs of the curvature operator: eigenvalues in descending
/// order with unit-norm eigenvectors and the verified residual
/// `|G v - value v|` of each pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    values: Vec<f64>,
    /// K x P row-major; row `k` is the eigenvector for `values[k]`.
    vectors: Vec<f64>,
    residuals: Vec<f64>,
    p: usize,
}

impl EigenPairs {
    pub fn new(values: Vec<f64>, vectors: Vec<f64>, residuals: Vec<f64>, p: usize) -> Result<Self> {
        let k = values.len();
        if vectors.len() != k * p || residuals.len() != k || k == 0 {
            return Err(Error::CountMismatch(format!(
                "eigenpair arrays disagree: {k} values, {} vector entries, {} residuals, p = {p}",
                vectors.len(),
                residuals.len()
            )));
        }
        Ok(EigenPairs {
            values,
            vectors,
            residuals,
            p,
        })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.p..(k + 1) * self.p]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// First `k` pairs (the dominant ones).
    pub fn truncated(&self, k: usize) -> Result<EigenPairs> {
        if k == 0 || k > self.k() {
            return Err(Error::CountMismatch(format!(
                "cannot truncate {} pairs to {k}",
                self.k()
            )));
        }
        Ok(EigenPairs {
            values: self.values[..k].to_vec(),
            vectors: self.vectors[..k * self.p].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            p: self.p,
        })
    }

    /// Check the invariants the sigma formulas rely on: finite positive
    /// eigenvalues, descending, none below `lambda` (within 1e-8, the slack
    /// the shifted spectrum is entitled to), unit vectors within 1e-10 and
    /// pairwise orthogonality within 1e-8.
    pub fn validate(&self, lambda: f64) -> Result<()> {
        const VALUE_SLACK: f64 = 1e-8;
        const NORM_TOL: f64 = 1e-10;
        const ORTH_TOL: f64 = 1e-8;
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::NonPositiveEigenvalue { index: i, value: v });
            }
            if v < lambda - VALUE_SLACK {
                return Err(Error::NonPositiveEigenvalue {
                    index: i,
                    value: v - lambda,
                });
            }
            if i > 0 && v > self.values[i - 1] + VALUE_SLACK {
                return Err(Error::InvalidSpec(format!(
                    "eigenvalues out of order at {i}: {} then {v}",
                    self.values[i - 1]
                )));
            }
        }
        for i in 0..self.k() {
            for j in i..self.k() {
                let d = dot(self.vector(i), self.vector(j));
                let (want, tol) = if i == j { (1.0, NORM_TOL) } else { (0.0, ORTH_TOL) };
                if (d - want).abs() > tol {
                    return Err(Error::InvalidSpec(format!(
                        "eigenvectors {i} and {j} have inner product {d}, expected {want}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Predictive uncertainty per (test example, class) pair, flattened row-major
/// with `classes` columns. `epsilon` bounds the truncation error of the
/// matching `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Uncertainty {
    pub sigma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub classes: usize,
}

impl Uncertainty {
    pub fn n_points(&self) -> usize {
        self.sigma.len() / self.classes
    }

    pub fn sigma_at(&self, example: usize, class: usize) -> f64 {
        self.sigma[example * self.classes + class]
    }

    pub fn epsilon_at(&self, example: usize, class: usize) -> f64 {
        self.epsilon[example * self.classes + class]
    }
}

/// Sensitivity rows of a test set expressed in the eigenbasis: for each
/// (example, class) pair, the coefficients against the first `k_max`
/// eigenvectors plus the row's total squared norm. Storing these makes a
/// sweep over smaller `k` a pure postprocessing step.
#[derive(Debug, Clone)]
pub struct ProjectedSensitivity {
    /// (example, class)-major, `k_max` coefficients per pair.
    coeffs: Vec<f64>,
    norm_sq: Vec<f64>,
    k_max: usize,
    classes: usize,
}

impl ProjectedSensitivity {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n_points(&self) -> usize {
        self.norm_sq.len() / self.classes
    }

    pub fn coeffs(&self, pair: usize) -> &[f64] {
        &self.coeffs[pair * self.k_max..(pair + 1) * self.k_max]
    }

    pub fn norm_sq(&self, pair: usize) -> f64 {
        self.norm_sq[pair]
    }
}

/// Project every test sensitivity row onto the eigenbasis (parallel over
/// test examples).
pub fn project_sensitivities(
    spec: &NetworkSpec,
    params: &ParamVector,
    eigen: &EigenPairs,
    data: DataView<'_>,
) -> Result<ProjectedSensitivity> {
    if eigen.p() != spec.param_count() {
        return Err(Error::CountMismatch(format!(
            "eigenvectors have {} components, network has {} parameters",
            eigen.p(),
            spec.param_count()
        )));
    }
    let classes = spec.num_classes();
    let k = eigen.k();
    let n = data.len();
    let mut coeffs = vec![0.0; n * classes * k];
    let mut norm_sq = vec![0.0; n * classes];
    coeffs
        .par_chunks_mut(classes * k)
        .zip(norm_sq.par_chunks_mut(classes))
        .enumerate()
        .for_each(|(i, (cs, ns))| {
            let sens = sensitivity(spec, params, data.input(i));
            for (c, row) in sens.rows().enumerate() {
                ns[c] = dot(row, row);
                for j in 0..k {
                    cs[c * k + j] = dot(eigen.vector(j), row);
                }
            }
        });
    Ok(ProjectedSensitivity {
        coeffs,
        norm_sq,
        k_max: k,
        classes,
    })
}

/// Evaluate `sigma` and `epsilon` from stored projections using the first
/// `k` eigenpairs.
///
/// For one sensitivity row `f` with coefficients `c_j = v_j . f`:
///
/// ```text
/// explained   = sum_{j<k} c_j^2 / value_j
/// complement  = max(|f|^2 - sum_{j<k} c_j^2, 0)
/// var(floor)  = (explained + complement / floor) / N
/// ```
///
/// `sigma` uses `floor = lambda` (the lower bound on every eigenvalue of
/// `G`, hence an upper bound on the variance) and `epsilon` is the gap to
/// the `floor = value_{k-1}` variant.
pub fn sigma_from_projection(
    proj: &ProjectedSensitivity,
    values: &[f64],
    k: usize,
    lambda: f64,
    n_train: usize,
) -> Result<Uncertainty> {
    if k == 0 || k > proj.k_max() || k > values.len() {
        return Err(Error::CountMismatch(format!(
            "requested {k} pairs, projection holds {} and values hold {}",
            proj.k_max(),
            values.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "curvature shift must be positive, got {lambda}"
        )));
    }
    if n_train == 0 {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    for (i, &v) in values[..k].iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveEigenvalue { index: i, value: v });
        }
    }
    let pairs = proj.norm_sq.len();
    let lambda_k = values[k - 1];
    let inv_n = 1.0 / n_train as f64;
    let mut sigma = vec![0.0; pairs];
    let mut epsilon = vec![0.0; pairs];
    for pair in 0..pairs {
        let cs = proj.coeffs(pair);
        let mut explained = 0.0;
        let mut energy = 0.0;
        for j in 0..k {
            let c2 = cs[j] * cs[j];
            explained += c2 / values[j];
            energy += c2;
        }
        let complement = (proj.norm_sq(pair) - energy).max(0.0);
        let upper = ((explained + complement / lambda) * inv_n).sqrt();
        let lower = ((explained + complement / lambda_k) * inv_n).sqrt();
        sigma[pair] = upper;
        epsilon[pair] = (upper - lower).abs();
    }
    Ok(Uncertainty {
        sigma,
        epsilon,
        classes: proj.classes,
    })
}

/// Low-rank uncertainty for a single input's sensitivity rows.
pub fn sigma_delta_point(
    sens: &crate::net::SensitivityMatrix,
    eigen: &EigenPairs,
    lambda: f64,
    n_train: usize,
) -> Result<Uncertainty> {
    if sens.params() != eigen.p() {
        return Err(Error::CountMismatch(format!(
            "sensitivity rows have {} components, eigenvectors {}",
            sens.params(),
            eigen.p()
        )));
    }
    let k = eigen.k();
    let mut coeffs = Vec::with_capacity(sens.classes() * k);
    let mut norm_sq = Vec::with_capacity(sens.classes());
    for row in sens.rows() {
        norm_sq.push(dot(row, row));
        for j in 0..k {
            coeffs.push(dot(eigen.vector(j), row));
        }
    }
    let proj = ProjectedSensitivity {
        coeffs,
        norm_sq,
        k_max: k,
        classes: sens.classes(),
    };
    sigma_from_projection(&proj, eigen.values(), k, lambda, n_train)
}

/// Low-rank uncertainty for a test set using all pairs in `eigen`.
pub fn sigma_delta(
    spec: &NetworkSpec,
    params: &ParamVector,
    eigen: &EigenPairs,
    lambda: f64,
    n_train: usize,
    data: DataView<'_>,
) -> Result<Uncertainty> {
    let proj = project_sensitivities(spec, params, eigen, data)?;
    sigma_from_projection(&proj, eigen.values(), eigen.k(), lambda, n_train)
}

/// Dense-route uncertainty: form `G` explicitly, factorize it, and solve for
/// every sensitivity row. Only valid below [`DENSE_CAP`] parameters.
pub fn sigma_delta_exact(
    spec: &NetworkSpec,
    params: &ParamVector,
    train: DataView<'_>,
    test: DataView<'_>,
    lambda: f64,
) -> Result<Uncertainty> {
    let p = spec.param_count();
    if p > DENSE_CAP {
        return Err(Error::DenseCapExceeded { p, cap: DENSE_CAP });
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "curvature shift must be positive, got {lambda}"
        )));
    }
    let grads = GradMatrix::compute(spec, params, train);
    let n = grads.n();
    let inv = 1.0 / n as f64;
    let mut g = nalgebra::DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let row = grads.row(i);
        for a in 0..p {
            let ra = row[a] * inv;
            if ra == 0.0 {
                continue;
            }
            for b in a..p {
                g[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        g[(a, a)] += lambda;
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    let chol = nalgebra::Cholesky::new(g).ok_or_else(|| {
        Error::Config("curvature matrix is not positive definite".into())
    })?;

    let classes = spec.num_classes();
    let inv_n = 1.0 / n as f64;
    let mut sigma = vec![0.0; test.len() * classes];
    for i in 0..test.len() {
        let sens = sensitivity(spec, params, test.input(i));
        for (c, row) in sens.rows().enumerate() {
            let f = nalgebra::DVector::from_column_slice(row);
            let u = chol.solve(&f);
            sigma[i * classes + c] = (f.dot(&u) * inv_n).max(0.0).sqrt();
        }
    }
    Ok(Uncertainty {
        epsilon: vec![0.0; sigma.len()],
        sigma,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ActShape, Dataset, NetworkSpec, ParamVector};
    use approx::assert_relative_eq;

    fn small_setup() -> (NetworkSpec, ParamVector, Dataset) {
        let spec = NetworkSpec::dense_classifier(2, &[], 2, 0.05).unwrap();
        let params =
            ParamVector::from_values(&spec, vec![0.4, -0.1, 0.2, 0.3, 0.0, 0.1]).unwrap();
        let data = Dataset::from_class_indices(
            vec![vec![1.0, 0.5], vec![-0.5, 1.0], vec![0.2, -0.7], vec![-1.0, -1.0]],
            &[0, 1, 0, 1],
            2,
            ActShape::Flat { len: 2 },
        )
        .unwrap();
        (spec, params, data)
    }

    #[test]
    fn matvec_matches_direct_sum() {
        let (spec, params, data) = small_setup();
        let grads = GradMatrix::compute(&spec, &params, data.view());
        let op = OpgOperator::new(&grads, 0.05).unwrap();
        let x: Vec<f64> = (0..grads.p()).map(|i| (i as f64 + 1.0) * 0.1).collect();
        let y = op.matvec(&x);
        let mut want = vec![0.0; grads.p()];
        for i in 0..grads.n() {
            let c = dot(grads.row(i), &x) / grads.n() as f64;
            for (w, g) in want.iter_mut().zip(grads.row(i)) {
                *w += c * g;
            }
        }
        for (w, &xj) in want.iter_mut().zip(&x) {
            *w += 0.05 * xj;
        }
        for (a, b) in y.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn operator_rejects_nonpositive_shift() {
        let (spec, params, data) = small_setup();
        let grads = GradMatrix::compute(&spec, &params, data.view());
        assert!(OpgOperator::new(&grads, 0.0).is_err());
        assert!(OpgOperator::new(&grads, -1.0).is_err());
    }

    #[test]
    fn identity_like_projection_recovers_direct_quadratic_form() {
        // With eigenpairs covering the whole space, sigma must match the
        // dense solve exactly.
        let (spec, params, data) = small_setup();
        let grads = GradMatrix::compute(&spec, &params, data.view());
        let op = OpgOperator::new(&grads, 0.05).unwrap();
        let eigen = lanczos_topk(&op, grads.p(), 7, 1e-9, 200).unwrap();
        let low = sigma_delta(&spec, &params, &eigen, 0.05, data.len(), data.view()).unwrap();
        let exact =
            sigma_delta_exact(&spec, &params, data.view(), data.view(), 0.05).unwrap();
        for (a, b) in low.sigma.iter().zip(&exact.sigma) {
            assert_relative_eq!(*a, *b, max_relative = 1e-7, epsilon = 1e-12);
        }
        for &e in &low.epsilon {
            assert!(e.abs() < 1e-10, "full-rank epsilon should vanish, got {e}");
        }
    }

    #[test]
    fn epsilon_shrinks_as_rank_grows() {
        let (spec, params, data) = small_setup();
        let grads = GradMatrix::compute(&spec, &params, data.view());
        let op = OpgOperator::new(&grads, 0.05).unwrap();
        let eigen = lanczos_topk(&op, grads.p(), 11, 1e-9, 200).unwrap();
        let proj = project_sensitivities(&spec, &params, &eigen, data.view()).unwrap();
        let mut last_max = f64::INFINITY;
        for k in 1..=eigen.k() {
            let u = sigma_from_projection(&proj, eigen.values(), k, 0.05, data.len()).unwrap();
            let mx = u.epsilon.iter().cloned().fold(0.0f64, f64::max);
            assert!(
                mx <= last_max + 1e-12,
                "epsilon grew from {last_max} to {mx} at k = {k}"
            );
            last_max = mx;
        }
    }

    #[test]
    fn dense_route_refuses_large_networks() {
        let spec = NetworkSpec::dense_classifier(64, &[40], 10, 0.01).unwrap();
        assert!(spec.param_count() > DENSE_CAP);
        let params = ParamVector::zeros(&spec);
        let inputs = vec![vec![0.0; 64]; 3];
        let data =
            Dataset::from_class_indices(inputs, &[0, 1, 2], 10, ActShape::Flat { len: 64 })
                .unwrap();
        let err =
            sigma_delta_exact(&spec, &params, data.view(), data.view(), 0.01).unwrap_err();
        assert!(matches!(err, Error::DenseCapExceeded { .. }));
    }

    #[test]
    fn truncated_keeps_leading_pairs() {
        let values = vec![3.0, 2.0, 1.0];
        let vectors = vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ];
        let pairs = EigenPairs::new(values, vectors, vec![0.0; 3], 3).unwrap();
        let t = pairs.truncated(2).unwrap();
        assert_eq!(t.values(), &[3.0, 2.0]);
        assert_eq!(t.vector(1), &[0.0, 1.0, 0.0]);
        assert!(pairs.truncated(0).is_err());
        assert!(pairs.truncated(4).is_err());
    }

    #[test]
    fn validate_flags_broken_invariants() {
        let id3 = vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ];
        let good = EigenPairs::new(vec![3.0, 2.0, 1.0], id3.clone(), vec![0.0; 3], 3).unwrap();
        assert!(good.validate(0.5).is_ok());

        let unordered =
            EigenPairs::new(vec![1.0, 2.0, 3.0], id3.clone(), vec![0.0; 3], 3).unwrap();
        assert!(unordered.validate(0.5).is_err());

        let below_shift = EigenPairs::new(vec![3.0, 0.1, 0.05], id3, vec![0.0; 3], 3).unwrap();
        assert!(below_shift.validate(0.5).is_err());

        let skew = vec![
            1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0,
        ];
        let not_orth = EigenPairs::new(vec![3.0, 2.0, 1.0], skew, vec![0.0; 3], 3).unwrap();
        assert!(not_orth.validate(0.5).is_err());
    }
}
