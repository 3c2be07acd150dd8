//! IDX image/label file parsing (the MNIST distribution format): big-endian
//! headers, unsigned byte payloads, pixels scaled to [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{ActShape, Dataset};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const NUM_CLASSES: usize = 10;

fn idx_err(message: impl Into<String>, offset: usize) -> Error {
    Error::Idx {
        message: message.into(),
        offset: offset as u64,
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(idx_err(
            format!("file truncated reading {what} ({} bytes total)", bytes.len()),
            offset,
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parsed image file: dimensions plus pixel rows scaled by 1/255.
#[derive(Debug)]
struct IdxImages {
    rows: usize,
    cols: usize,
    pixels: Vec<Vec<f64>>,
}

fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32_be(bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(idx_err(
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
            0,
        ));
    }
    let count = read_u32_be(bytes, 4, "image count")? as usize;
    let rows = read_u32_be(bytes, 8, "row count")? as usize;
    let cols = read_u32_be(bytes, 12, "column count")? as usize;
    let per_image = rows * cols;
    let need = 16 + count * per_image;
    if bytes.len() < need {
        return Err(idx_err(
            format!(
                "image payload truncated: {} bytes for {count} images of {rows}x{cols}",
                bytes.len() - 16
            ),
            bytes.len(),
        ));
    }
    let pixels = (0..count)
        .map(|i| {
            let at = 16 + i * per_image;
            bytes[at..at + per_image]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect()
        })
        .collect();
    Ok(IdxImages { rows, cols, pixels })
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32_be(bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(idx_err(
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
            0,
        ));
    }
    let count = read_u32_be(bytes, 4, "label count")? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(idx_err(
            format!("label payload truncated: {} bytes for {count} labels", bytes.len() - 8),
            bytes.len(),
        ));
    }
    bytes[8..8 + count]
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let c = usize::from(b);
            if c >= NUM_CLASSES {
                Err(idx_err(format!("label value {c} out of range 0..9"), 8 + i))
            } else {
                Ok(c)
            }
        })
        .collect()
}

/// Load a matching image/label file pair into a dataset with one-hot labels
/// over ten classes and a `rows x cols x 1` input shape.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)
        .map_err(|e| Error::from(e).in_stage(format!("reading {}", images_path.display())))?;
    let label_bytes = std::fs::read(labels_path)
        .map_err(|e| Error::from(e).in_stage(format!("reading {}", labels_path.display())))?;
    let images = parse_images(&image_bytes)
        .map_err(|e| e.in_stage(format!("reading {}", images_path.display())))?;
    let labels = parse_labels(&label_bytes)
        .map_err(|e| e.in_stage(format!("reading {}", labels_path.display())))?;
    if images.pixels.len() != labels.len() {
        return Err(Error::CountMismatch(format!(
            "{} images in {} but {} labels in {}",
            images.pixels.len(),
            images_path.display(),
            labels.len(),
            labels_path.display()
        )));
    }
    Dataset::from_class_indices(
        images.pixels,
        &labels,
        NUM_CLASSES,
        ActShape::Map {
            h: images.rows,
            w: images.cols,
            c: 1,
        },
    )
}
