//! Binary checkpoint files for every persisted intermediate: trained
//! parameter vectors, per-example gradient matrices, eigenpairs, ensemble
//! predictions, and uncertainty grids.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes, identifies the payload kind
//! version    u32
//! dim_count  u64, then dim_count u64 dimensions
//! payload    f64 values, count fixed by kind and dimensions
//! checksum   u64 FNV-1a over every preceding byte
//! ```
//!
//! Values round-trip bit-exactly; a flipped byte anywhere fails the checksum.

use std::path::Path;

use crate::delta::{EigenPairs, GradMatrix, Uncertainty};
use crate::error::{Error, Result};
use crate::seed::fnv1a;

pub const FORMAT_VERSION: u32 = 1;

const MAGIC_PARAMS: &[u8; 8] = b"DBPARAM\0";
const MAGIC_GRADS: &[u8; 8] = b"DBGRADS\0";
const MAGIC_EIGEN: &[u8; 8] = b"DBEIGEN\0";
const MAGIC_PREDS: &[u8; 8] = b"DBPREDS\0";
const MAGIC_MATRIX: &[u8; 8] = b"DBMATRX\0";
const MAGIC_UNCERT: &[u8; 8] = b"DBUNCRT\0";

fn ck_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn encode(magic: &[u8; 8], dims: &[u64], sections: &[&[f64]]) -> Vec<u8> {
    let values: usize = sections.iter().map(|s| s.len()).sum();
    let mut bytes = Vec::with_capacity(8 + 4 + 8 + dims.len() * 8 + values * 8 + 8);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for &d in dims {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    for section in sections {
        for &v in *section {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    bytes
}

fn write_file(path: &Path, magic: &[u8; 8], dims: &[u64], sections: &[&[f64]]) -> Result<()> {
    std::fs::write(path, encode(magic, dims, sections))?;
    Ok(())
}

/// Verified header: dimensions plus the raw payload values.
struct Decoded {
    dims: Vec<u64>,
    values: Vec<f64>,
}

fn read_file(path: &Path, magic: &[u8; 8]) -> Result<Decoded> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 + 4 + 8 + 8 {
        return Err(ck_err(path, format!("file too short ({} bytes)", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("tail is 8 bytes"));
    let computed = fnv1a(body);
    if stored != computed {
        return Err(ck_err(
            path,
            format!("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"),
        ));
    }
    if &body[..8] != magic {
        return Err(ck_err(
            path,
            format!(
                "wrong kind: found {:?}, expected {:?}",
                String::from_utf8_lossy(&body[..8]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ck_err(
            path,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let dim_count = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let payload_at = 20 + dim_count * 8;
    if body.len() < payload_at || (body.len() - payload_at) % 8 != 0 {
        return Err(ck_err(path, "malformed dimension block".to_string()));
    }
    let dims: Vec<u64> = (0..dim_count)
        .map(|i| {
            let at = 20 + i * 8;
            u64::from_le_bytes(body[at..at + 8].try_into().expect("8 bytes"))
        })
        .collect();
    let values: Vec<f64> = body[payload_at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Decoded { dims, values })
}

fn expect_dims(path: &Path, decoded: &Decoded, n_dims: usize, payload: usize) -> Result<()> {
    if decoded.dims.len() != n_dims {
        return Err(ck_err(
            path,
            format!("expected {n_dims} dimensions, found {}", decoded.dims.len()),
        ));
    }
    if decoded.values.len() != payload {
        return Err(ck_err(
            path,
            format!("expected {payload} values, found {}", decoded.values.len()),
        ));
    }
    Ok(())
}

pub fn save_params(path: &Path, values: &[f64]) -> Result<()> {
    write_file(path, MAGIC_PARAMS, &[values.len() as u64], &[values])
}

pub fn load_params(path: &Path) -> Result<Vec<f64>> {
    let d = read_file(path, MAGIC_PARAMS)?;
    if d.dims.len() != 1 {
        return Err(ck_err(path, "parameter checkpoint needs one dimension"));
    }
    expect_dims(path, &d, 1, d.dims[0] as usize)?;
    Ok(d.values)
}

pub fn save_grads(path: &Path, grads: &GradMatrix) -> Result<()> {
    write_file(
        path,
        MAGIC_GRADS,
        &[grads.n() as u64, grads.p() as u64],
        &[grads.rows_flat()],
    )
}

pub fn load_grads(path: &Path) -> Result<GradMatrix> {
    let d = read_file(path, MAGIC_GRADS)?;
    if d.dims.len() != 2 {
        return Err(ck_err(path, "gradient checkpoint needs two dimensions"));
    }
    let (n, p) = (d.dims[0] as usize, d.dims[1] as usize);
    expect_dims(path, &d, 2, n * p)?;
    GradMatrix::from_rows(d.values, n, p)
        .map_err(|e| ck_err(path, format!("inconsistent gradient payload: {e}")))
}

pub fn save_eigen(path: &Path, eigen: &EigenPairs) -> Result<()> {
    let k = eigen.k();
    let mut sections: Vec<&[f64]> = vec![eigen.values()];
    for i in 0..k {
        sections.push(eigen.vector(i));
    }
    sections.push(eigen.residuals());
    write_file(
        path,
        MAGIC_EIGEN,
        &[k as u64, eigen.p() as u64],
        &sections,
    )
}

pub fn load_eigen(path: &Path) -> Result<EigenPairs> {
    let d = read_file(path, MAGIC_EIGEN)?;
    if d.dims.len() != 2 {
        return Err(ck_err(path, "eigenpair checkpoint needs two dimensions"));
    }
    let (k, p) = (d.dims[0] as usize, d.dims[1] as usize);
    expect_dims(path, &d, 2, k * (p + 2))?;
    let values = d.values[..k].to_vec();
    let vectors = d.values[k..k + k * p].to_vec();
    let residuals = d.values[k + k * p..].to_vec();
    EigenPairs::new(values, vectors, residuals, p)
        .map_err(|e| ck_err(path, format!("inconsistent eigen payload: {e}")))
}

/// Per-replicate prediction matrices, each `n x classes` row-major.
pub fn save_preds(path: &Path, per_replicate: &[Vec<f64>], n: usize, classes: usize) -> Result<()> {
    for (r, preds) in per_replicate.iter().enumerate() {
        if preds.len() != n * classes {
            return Err(ck_err(
                path,
                format!(
                    "replicate {r} holds {} values, expected {n} x {classes}",
                    preds.len()
                ),
            ));
        }
    }
    let sections: Vec<&[f64]> = per_replicate.iter().map(Vec::as_slice).collect();
    write_file(
        path,
        MAGIC_PREDS,
        &[per_replicate.len() as u64, n as u64, classes as u64],
        &sections,
    )
}

/// Returns (per-replicate matrices, n, classes).
pub fn load_preds(path: &Path) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let d = read_file(path, MAGIC_PREDS)?;
    if d.dims.len() != 3 {
        return Err(ck_err(path, "prediction checkpoint needs three dimensions"));
    }
    let (b, n, classes) = (d.dims[0] as usize, d.dims[1] as usize, d.dims[2] as usize);
    expect_dims(path, &d, 3, b * n * classes)?;
    let per = n * classes;
    let rows = (0..b).map(|r| d.values[r * per..(r + 1) * per].to_vec()).collect();
    Ok((rows, n, classes))
}

/// A plain `n x classes` grid (bootstrap mean or standard deviation).
pub fn save_matrix(path: &Path, values: &[f64], n: usize, classes: usize) -> Result<()> {
    if values.len() != n * classes {
        return Err(ck_err(
            path,
            format!("{} values cannot be {n} x {classes}", values.len()),
        ));
    }
    write_file(path, MAGIC_MATRIX, &[n as u64, classes as u64], &[values])
}

/// Returns (values, n, classes).
pub fn load_matrix(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let d = read_file(path, MAGIC_MATRIX)?;
    if d.dims.len() != 2 {
        return Err(ck_err(path, "matrix checkpoint needs two dimensions"));
    }
    let (n, classes) = (d.dims[0] as usize, d.dims[1] as usize);
    expect_dims(path, &d, 2, n * classes)?;
    Ok((d.values, n, classes))
}

/// Sigma and epsilon grids together.
pub fn save_uncertainty(path: &Path, u: &Uncertainty) -> Result<()> {
    write_file(
        path,
        MAGIC_UNCERT,
        &[u.n_points() as u64, u.classes as u64],
        &[u.sigma.as_slice(), u.epsilon.as_slice()],
    )
}

pub fn load_uncertainty(path: &Path) -> Result<Uncertainty> {
    let d = read_file(path, MAGIC_UNCERT)?;
    if d.dims.len() != 2 {
        return Err(ck_err(path, "uncertainty checkpoint needs two dimensions"));
    }
    let (n, classes) = (d.dims[0] as usize, d.dims[1] as usize);
    expect_dims(path, &d, 2, 2 * n * classes)?;
    let grid = n * classes;
    Ok(Uncertainty {
        sigma: d.values[..grid].to_vec(),
        epsilon: d.values[grid..].to_vec(),
        classes,
    })
}
