//! Synthetic Gaussian blob classification data.
//!
//! Each class `c` has a fixed unit direction `u_c`; samples are drawn as
//! `separation * u_c + noise` with standard normal noise per coordinate. The
//! directions depend only on `(classes, dim)`, never on the sample seed, so
//! train and test sets drawn with different seeds share the same geometry.

use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::{ActShape, Dataset};
use crate::seed::derived_rng;
use rand::Rng;

/// Seed owned by the direction construction. Sample seeds never touch it.
const DIRECTION_SEED: u64 = 0x00de_7ab0_0700_0001;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit center directions for each class. Directions are orthonormalized
/// while the dimension allows it, then fall back to independent random unit
/// vectors, so small class counts get exactly equidistant centers.
pub fn class_directions(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = derived_rng(DIRECTION_SEED, "blob-directions", dim as u64);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for c in 0..classes {
        loop {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if c < dim {
                for prev in &dirs {
                    let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (vi, pi) in v.iter_mut().zip(prev) {
                        *vi -= dot * pi;
                    }
                }
            }
            let n = norm(&v);
            if n > 1e-6 {
                for vi in &mut v {
                    *vi /= n;
                }
                dirs.push(v);
                break;
            }
        }
    }
    dirs
}

/// Draw `per_class` examples for each of `classes` blobs in `dim` dimensions.
/// Examples are ordered class-major; each class has its own derived stream so
/// the draw for class `c` does not depend on how many other classes exist.
pub fn gen_synthetic(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::InvalidData(format!(
            "per_class and dim must be positive, got {per_class} and {dim}"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::InvalidData(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    let dirs = class_directions(classes, dim);
    let mut inputs = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, dir) in dirs.iter().enumerate() {
        let mut rng = derived_rng(seed, "blob-class", c as u64);
        for _ in 0..per_class {
            let x: Vec<f64> = dir
                .iter()
                .map(|&d| separation * d + rng.sample::<f64, _>(StandardNormal))
                .collect();
            inputs.push(x);
            labels.push(c);
        }
    }
    Dataset::from_class_indices(inputs, &labels, classes, ActShape::Flat { len: dim })
}
