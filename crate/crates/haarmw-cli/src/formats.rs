//! On-disk formats: certificate records (JSONL + CSV) and a minimal NPY
//! writer/reader for dense-matrix dumps.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use haarmw::Certificate;
use serde::{Deserialize, Serialize};

/// Flattened certificate row as it appears in the JSONL and CSV outputs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateRecord {
    pub name: String,
    pub seed: u64,
    pub dim: usize,
    pub depth: usize,
    pub branching: usize,
    pub complexity: usize,
    pub tag: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub applicable: bool,
}

impl CertificateRecord {
    pub fn from_certificate(c: &Certificate) -> Self {
        CertificateRecord {
            name: c.name.clone(),
            seed: c.params.seed,
            dim: c.params.dim,
            depth: c.params.depth,
            branching: c.params.branching,
            complexity: c.params.complexity,
            tag: c.params.tag.clone(),
            lhs: c.lhs,
            rhs: c.rhs,
            slack: c.slack,
            pass: c.pass,
            applicable: c.applicable,
        }
    }

    /// Sort key giving the deterministic output order.
    pub fn sort_key(&self) -> (String, u64, usize, usize, usize, usize) {
        (
            self.name.clone(),
            self.seed,
            self.dim,
            self.depth,
            self.branching,
            self.complexity,
        )
    }
}

pub fn write_jsonl(path: &Path, records: &[CertificateRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CertificateRecord>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CertificateRecord =
            serde_json::from_str(line).with_context(|| format!("line {} of JSONL", i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub const CSV_HEADER: &str =
    "name,seed,dim,depth,branching,complexity,tag,lhs,rhs,slack,pass,applicable";

pub fn to_csv(records: &[CertificateRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.seed,
            r.dim,
            r.depth,
            r.branching,
            r.complexity,
            r.tag,
            r.lhs,
            r.rhs,
            r.slack,
            r.pass,
            r.applicable
        ));
    }
    out
}

pub fn write_csv(path: &Path, records: &[CertificateRecord]) -> Result<()> {
    std::fs::write(path, to_csv(records)).with_context(|| format!("writing {}", path.display()))
}

/// Write a row-major f64 matrix as NPY v1.0 (numpy-compatible).
pub fn write_npy(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    if data.len() != rows * cols {
        bail!("shape mismatch: {}x{} vs {} values", rows, cols, data.len());
    }
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}"
    );
    // pad so magic + version + length + header is a multiple of 64
    let unpadded = 6 + 2 + 2 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    file.write_all(b"\x93NUMPY\x01\x00")?;
    file.write_all(&(header.len() as u16).to_le_bytes())?;
    file.write_all(header.as_bytes())?;
    for v in data {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read back an NPY file written by [`write_npy`].
pub fn read_npy(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut buf)?;
    if buf.len() < 10 || &buf[0..6] != b"\x93NUMPY" {
        bail!("not an NPY file");
    }
    let hlen = u16::from_le_bytes([buf[8], buf[9]]) as usize;
    let header = std::str::from_utf8(&buf[10..10 + hlen]).context("header utf8")?;
    let shape_part = header
        .split("'shape':")
        .nth(1)
        .and_then(|s| s.split('(').nth(1))
        .and_then(|s| s.split(')').next())
        .context("shape field")?;
    let dims: Vec<usize> = shape_part
        .split(',')
        .filter_map(|s| s.trim().parse().ok())
        .collect();
    if dims.len() != 2 {
        bail!("expected a 2-d shape, got {shape_part:?}");
    }
    let (rows, cols) = (dims[0], dims[1]);
    let body = &buf[10 + hlen..];
    if body.len() != rows * cols * 8 {
        bail!("payload size mismatch");
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}
