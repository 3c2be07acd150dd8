//! Head-to-head comparison of the two uncertainty routes: pair the per-class
//! sigmas over a test set, fit ordinary least squares per repetition, and
//! sweep the eigenpair count K or the ensemble size B while reusing one
//! decomposition's prefixes or one ensemble's first replicates.

use serde::{Deserialize, Serialize};

use crate::bootstrap::ensemble_sigma_first;
use crate::delta::{sigma_from_projection, ProjectedSensitivity, Uncertainty};
use crate::error::{Error, Result};
use crate::train::SeedMode;

/// One least-squares fit of `sigma_boot` against `sigma_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Largest delta-route truncation bound among the fitted points; zero
    /// when the points carry no such bound.
    pub max_epsilon: f64,
}

/// Ordinary least squares of y on x over `(x, y)` points:
/// `beta = cov(x, y) / var(x)`, `alpha = mean(y) - beta mean(x)`, and
/// `r_squared` the squared sample correlation.
pub fn ols(points: &[(f64, f64)]) -> Result<RegressionResult> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let inv = 1.0 / n as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() * inv;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() * inv;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateRegressor { n });
    }
    let beta = sxy / sxx;
    let alpha = y_mean - beta * x_mean;
    // Constant y is fit exactly by the horizontal line; call that perfect
    // rather than dividing zero by zero.
    let r_squared = if syy <= 0.0 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RegressionResult {
        alpha,
        beta,
        r_squared,
        n_points: n,
        max_epsilon: 0.0,
    })
}

/// Identifies which experiment cell a table belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub dataset: String,
    pub b: usize,
    pub k: usize,
    pub rep: usize,
    pub policy: SeedMode,
}

/// One paired observation: test example `n`, class `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub n: usize,
    pub m: usize,
    pub sigma_boot: f64,
    pub sigma_delta: f64,
    pub epsilon: f64,
}

/// All `(n, m)` pairs of one repetition at a fixed (B, K).
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTable {
    pub meta: TableMeta,
    pub rows: Vec<TableRow>,
}

impl UncertaintyTable {
    /// `(sigma_delta, sigma_boot)` pairs in row order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.sigma_delta, r.sigma_boot)).collect()
    }

    pub fn max_epsilon(&self) -> f64 {
        self.rows.iter().map(|r| r.epsilon).fold(0.0, f64::max)
    }
}

/// Pair the bootstrap sigmas (flattened example-major, `classes` per
/// example) with the delta route's output, one row per (example, class).
pub fn build_table(
    boot_sigma: &[f64],
    delta: &Uncertainty,
    meta: TableMeta,
) -> Result<UncertaintyTable> {
    let classes = delta.classes;
    if boot_sigma.len() != delta.sigma.len() {
        return Err(Error::CountMismatch(format!(
            "{} bootstrap sigmas vs {} delta sigmas",
            boot_sigma.len(),
            delta.sigma.len()
        )));
    }
    if boot_sigma.iter().any(|s| !(*s >= 0.0))
        || delta.sigma.iter().any(|s| !(*s >= 0.0))
    {
        return Err(Error::InvalidData(
            "sigmas must be non-negative and finite".into(),
        ));
    }
    let rows = (0..boot_sigma.len())
        .map(|cell| TableRow {
            n: cell / classes,
            m: cell % classes,
            sigma_boot: boot_sigma[cell],
            sigma_delta: delta.sigma[cell],
            epsilon: delta.epsilon[cell],
        })
        .collect();
    Ok(UncertaintyTable { meta, rows })
}

/// Fit the table's pooled points and attach its worst epsilon.
pub fn regress_table(table: &UncertaintyTable) -> Result<RegressionResult> {
    let mut fit = ols(&table.points())?;
    fit.max_epsilon = table.max_epsilon();
    Ok(fit)
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    K,
    B,
}

/// Aggregate of the per-repetition fits at one axis value: mean and
/// 2-standard-deviation half-width for the correlation and slope, plus the
/// worst epsilon seen in any repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub r_squared_mean: f64,
    pub r_squared_band: f64,
    pub beta_mean: f64,
    pub beta_band: f64,
    pub max_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

fn mean_and_band(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 2.0 * var.sqrt())
}

/// Collapse per-repetition fits (outer: repetition, inner: axis value, same
/// order as `values`) into one summary.
pub fn summarize_fits(
    axis: SweepAxis,
    values: &[usize],
    per_rep: &[Vec<RegressionResult>],
) -> Result<SweepSummary> {
    if per_rep.is_empty() || values.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    for (rep, fits) in per_rep.iter().enumerate() {
        if fits.len() != values.len() {
            return Err(Error::CountMismatch(format!(
                "repetition {rep} has {} fits for {} axis values",
                fits.len(),
                values.len()
            )));
        }
    }
    let points = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let r2: Vec<f64> = per_rep.iter().map(|f| f[i].r_squared).collect();
            let beta: Vec<f64> = per_rep.iter().map(|f| f[i].beta).collect();
            let eps = per_rep.iter().map(|f| f[i].max_epsilon).fold(0.0, f64::max);
            let (r_squared_mean, r_squared_band) = mean_and_band(&r2);
            let (beta_mean, beta_band) = mean_and_band(&beta);
            SweepPoint {
                value,
                r_squared_mean,
                r_squared_band,
                beta_mean,
                beta_band,
                max_epsilon: eps,
            }
        })
        .collect();
    Ok(SweepSummary { axis, points })
}

/// Everything one repetition contributes to a K sweep: its projected test
/// sensitivities, eigenvalues, curvature shift and training-set size, and
/// the fixed-B bootstrap sigmas to regress against.
pub struct KSweepRep<'a> {
    pub proj: &'a ProjectedSensitivity,
    pub eigenvalues: &'a [f64],
    pub lambda: f64,
    pub n_train: usize,
    pub boot_sigma: &'a [f64],
}

/// Refit every repetition at each K, reusing eigenpair prefixes.
pub fn sweep_k(reps: &[KSweepRep<'_>], k_values: &[usize]) -> Result<SweepSummary> {
    if reps.is_empty() || k_values.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let mut per_rep = Vec::with_capacity(reps.len());
    for (d, rep) in reps.iter().enumerate() {
        let mut fits = Vec::with_capacity(k_values.len());
        for &k in k_values {
            if k > rep.proj.k_max() || k > rep.eigenvalues.len() {
                return Err(Error::CountMismatch(format!(
                    "repetition {d} holds {} eigenpairs, sweep requested K = {k}",
                    rep.proj.k_max().min(rep.eigenvalues.len())
                )));
            }
            let delta =
                sigma_from_projection(rep.proj, rep.eigenvalues, k, rep.lambda, rep.n_train)?;
            let table = build_table(
                rep.boot_sigma,
                &delta,
                TableMeta {
                    dataset: String::new(),
                    b: 0,
                    k,
                    rep: d,
                    policy: SeedMode::Drwi,
                },
            )?;
            fits.push(regress_table(&table)?);
        }
        per_rep.push(fits);
    }
    summarize_fits(SweepAxis::K, k_values, &per_rep)
}

/// One repetition's contribution to a B sweep: its fixed-K delta output and
/// the per-replicate prediction matrices of its ensemble.
pub struct BSweepRep<'a> {
    pub delta: &'a Uncertainty,
    pub per_replicate: &'a [Vec<f64>],
}

/// Refit every repetition at each ensemble size, using the first B
/// replicates each time.
pub fn sweep_b(reps: &[BSweepRep<'_>], b_values: &[usize]) -> Result<SweepSummary> {
    if reps.is_empty() || b_values.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let mut per_rep = Vec::with_capacity(reps.len());
    for (d, rep) in reps.iter().enumerate() {
        let mut fits = Vec::with_capacity(b_values.len());
        for &b in b_values {
            let (_, boot) = ensemble_sigma_first(rep.per_replicate, b, rep.delta.classes)
                .map_err(|e| e.in_stage(format!("ensemble-size sweep, repetition {d}")))?;
            let table = build_table(
                &boot,
                rep.delta,
                TableMeta {
                    dataset: String::new(),
                    b,
                    k: 0,
                    rep: d,
                    policy: SeedMode::Drwi,
                },
            )?;
            fits.push(regress_table(&table)?);
        }
        per_rep.push(fits);
    }
    summarize_fits(SweepAxis::B, b_values, &per_rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_line_fits_perfectly() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, i as f64)).collect();
        let fit = ols(&pts).unwrap();
        assert_relative_eq!(fit.alpha, 0.0, epsilon = 1e-14);
        assert_relative_eq!(fit.beta, 1.0, epsilon = 1e-14);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-14);
        assert_eq!(fit.n_points, 5);
    }

    #[test]
    fn exact_affine_data_recovers_coefficients() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let fit = ols(&pts).unwrap();
        assert_relative_eq!(fit.alpha, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn three_point_hand_case() {
        let fit = ols(&[(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_relative_eq!(fit.beta, 1.5, epsilon = 1e-14);
        assert_relative_eq!(fit.alpha, -1.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(fit.r_squared, 27.0 / 28.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_inputs_are_structured_errors() {
        assert!(matches!(
            ols(&[(1.0, 2.0)]),
            Err(Error::InsufficientData { need: 2, got: 1 })
        ));
        assert!(matches!(
            ols(&[(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]),
            Err(Error::DegenerateRegressor { n: 3 })
        ));
    }

    #[test]
    fn permuting_points_leaves_fit_unchanged() {
        let a = ols(&[(0.0, 0.1), (1.0, 1.2), (2.0, 1.9), (3.0, 3.3)]).unwrap();
        let b = ols(&[(3.0, 3.3), (0.0, 0.1), (2.0, 1.9), (1.0, 1.2)]).unwrap();
        assert_relative_eq!(a.alpha, b.alpha, epsilon = 1e-12);
        assert_relative_eq!(a.beta, b.beta, epsilon = 1e-12);
        assert_relative_eq!(a.r_squared, b.r_squared, epsilon = 1e-12);
    }

    #[test]
    fn rescaling_x_rescales_slope_only() {
        let pts = [(0.5, 0.1), (1.0, 1.2), (2.0, 1.9), (3.0, 3.3)];
        let c = 4.0;
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (c * x, y)).collect();
        let a = ols(&pts).unwrap();
        let b = ols(&scaled).unwrap();
        assert_relative_eq!(b.beta, a.beta / c, epsilon = 1e-12);
        assert_relative_eq!(b.r_squared, a.r_squared, epsilon = 1e-12);
    }

    fn meta() -> TableMeta {
        TableMeta {
            dataset: "blobs".into(),
            b: 8,
            k: 4,
            rep: 0,
            policy: SeedMode::Drwi,
        }
    }

    #[test]
    fn table_pairs_cells_by_example_and_class() {
        let boot = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let delta = Uncertainty {
            sigma: vec![0.15, 0.25, 0.35, 0.45, 0.55, 0.65],
            epsilon: vec![0.0, 0.01, 0.0, 0.02, 0.0, 0.0],
            classes: 3,
        };
        let table = build_table(&boot, &delta, meta()).unwrap();
        assert_eq!(table.rows.len(), 6);
        let r = table.rows[4];
        assert_eq!((r.n, r.m), (1, 1));
        assert_relative_eq!(r.sigma_boot, 0.5);
        assert_relative_eq!(r.sigma_delta, 0.55);
        assert_relative_eq!(table.max_epsilon(), 0.02);
    }

    #[test]
    fn table_rejects_mismatched_counts() {
        let delta = Uncertainty {
            sigma: vec![0.1, 0.2],
            epsilon: vec![0.0, 0.0],
            classes: 2,
        };
        assert!(build_table(&[0.1], &delta, meta()).is_err());
    }

    #[test]
    fn regress_table_carries_worst_epsilon() {
        let delta = Uncertainty {
            sigma: vec![0.1, 0.2, 0.32, 0.41],
            epsilon: vec![0.001, 0.004, 0.002, 0.0],
            classes: 2,
        };
        let boot = vec![0.11, 0.19, 0.33, 0.4];
        let fit = regress_table(&build_table(&boot, &delta, meta()).unwrap()).unwrap();
        assert_relative_eq!(fit.max_epsilon, 0.004);
        assert!(fit.r_squared > 0.9);
    }

    #[test]
    fn single_repetition_bands_degenerate_to_points() {
        let fit = RegressionResult {
            alpha: 0.1,
            beta: 1.2,
            r_squared: 0.9,
            n_points: 10,
            max_epsilon: 0.01,
        };
        let s = summarize_fits(SweepAxis::K, &[5], &[vec![fit]]).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_relative_eq!(s.points[0].r_squared_mean, 0.9);
        assert_eq!(s.points[0].r_squared_band, 0.0);
        assert_relative_eq!(s.points[0].beta_mean, 1.2);
        assert_eq!(s.points[0].beta_band, 0.0);
    }

    #[test]
    fn bands_are_twice_sample_sd() {
        let mk = |r2: f64, beta: f64| RegressionResult {
            alpha: 0.0,
            beta,
            r_squared: r2,
            n_points: 4,
            max_epsilon: 0.0,
        };
        let s = summarize_fits(
            SweepAxis::B,
            &[2],
            &[vec![mk(0.8, 1.0)], vec![mk(0.9, 1.4)]],
        )
        .unwrap();
        // sd of {0.8, 0.9} = 0.0707...; band = 2 sd.
        assert_relative_eq!(s.points[0].r_squared_mean, 0.85, epsilon = 1e-12);
        assert_relative_eq!(
            s.points[0].r_squared_band,
            2.0 * (0.005f64).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(s.points[0].beta_band, 2.0 * (0.08f64).sqrt(), epsilon = 1e-12);
    }
}
