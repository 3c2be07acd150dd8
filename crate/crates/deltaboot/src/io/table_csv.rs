//! CSV serialization for paired-uncertainty tables.
//!
//! One file per `(B, K, repetition)` cell. A `#`-prefixed comment line holds
//! the cell metadata as JSON, followed by the fixed header
//! `n,m,sigma_boot,sigma_delta,epsilon` and one row per (example, class)
//! pair. Floats use the shortest representation that parses back to the same
//! value, so write-read-write is byte identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::compare::{TableMeta, TableRow, UncertaintyTable};
use crate::error::{Error, Result};

pub const HEADER: &str = "n,m,sigma_boot,sigma_delta,epsilon";

pub fn table_to_string(table: &UncertaintyTable) -> Result<String> {
    let meta = serde_json::to_string(&table.meta)?;
    let mut out = String::new();
    writeln!(out, "# meta {meta}").expect("string write");
    writeln!(out, "{HEADER}").expect("string write");
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.n, row.m, row.sigma_boot, row.sigma_delta, row.epsilon
        )
        .expect("string write");
    }
    Ok(out)
}

pub fn write_table(path: &Path, table: &UncertaintyTable) -> Result<()> {
    std::fs::write(path, table_to_string(table)?)?;
    Ok(())
}

fn data_err(line: usize, message: impl std::fmt::Display) -> Error {
    Error::InvalidData(format!("table line {line}: {message}"))
}

pub fn parse_table(text: &str) -> Result<UncertaintyTable> {
    let mut meta: Option<TableMeta> = None;
    let mut saw_header = false;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(json) = rest.strip_prefix("meta ") {
                if meta.is_some() {
                    return Err(data_err(lineno, "duplicate metadata line"));
                }
                meta = Some(serde_json::from_str(json)?);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(data_err(lineno, format!("expected header {HEADER:?}, got {line:?}")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(data_err(lineno, format!("expected 5 fields, got {}", fields.len())));
        }
        let n: usize = fields[0].parse().map_err(|e| data_err(lineno, e))?;
        let m: usize = fields[1].parse().map_err(|e| data_err(lineno, e))?;
        let sigma_boot: f64 = fields[2].parse().map_err(|e| data_err(lineno, e))?;
        let sigma_delta: f64 = fields[3].parse().map_err(|e| data_err(lineno, e))?;
        let epsilon: f64 = fields[4].parse().map_err(|e| data_err(lineno, e))?;
        rows.push(TableRow {
            n,
            m,
            sigma_boot,
            sigma_delta,
            epsilon,
        });
    }
    let meta = meta.ok_or_else(|| Error::InvalidData("table has no metadata line".into()))?;
    if !saw_header {
        return Err(Error::InvalidData("table has no header line".into()));
    }
    Ok(UncertaintyTable { meta, rows })
}

pub fn read_table(path: &Path) -> Result<UncertaintyTable> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text)
        .map_err(|e| e.in_stage(format!("reading {}", path.display())))
}
