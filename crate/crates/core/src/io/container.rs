//! Little-endian binary containers for fingerprints and trained models, and
//! a CSV fingerprint dump.
//!
//! Fingerprint file:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `DECAFFP\0` |
//! | 4 | version `u32` (1) |
//! | 4 | channels `u32` |
//! | 8 | grid hash `u64` |
//! | 8 | grid node count `u64` |
//! | 8 | fingerprint count `u64` |
//! | … | one record per fingerprint |
//!
//! Record: label length `u32`, label UTF-8 bytes, center `3 × f64`, frame
//! rows `9 × f64` (b_α, b_β, b_γ), values `channels × nodes × f64`.
//!
//! Model file:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `DECAFGP\0` |
//! | 4 | version `u32` (1) |
//! | 4 | channels `u32` |
//! | 8 | grid hash `u64` |
//! | 8 | grid node count `u64` |
//! | 4 | component count `u32` (1 scalar, 3 vector) |
//! | … | one block per component |
//!
//! Component: target kind `u32` (0 scalar, 1 per-atom, 2 molecular),
//! vector component `u32`, output scale, length scale and jitter `3 × f64`,
//! training count `u64`, that many fingerprint records, then the targets as
//! `f64`. The Cholesky factor is recomputed on load.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::fingerprint::{Fingerprint, FingerprintError};
use crate::frame::{CanonicalFrame, Vec3};
use crate::quadrature::QuadratureGrid;
use crate::regress::{GPHyperparameters, GPModel, RegressError, TargetKind};

pub const FINGERPRINT_MAGIC: [u8; 8] = *b"DECAFFP\0";
pub const MODEL_MAGIC: [u8; 8] = *b"DECAFGP\0";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContainerError {
    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("file ends early at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("file was written for grid {file:016x}, current grid is {grid:016x}")]
    GridMismatch { file: u64, grid: u64 },
    #[error("file has {file} nodes per channel, grid has {grid}")]
    NodeCountMismatch { file: u64, grid: usize },
    #[error("label is not valid UTF-8")]
    InvalidLabel,
    #[error("record {0} has a degenerate frame")]
    InvalidFrame(usize),
    #[error("unknown target kind tag {0}")]
    UnknownTargetKind(u32),
    #[error("fingerprints do not share one grid and channel layout")]
    MixedFingerprints,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Regress(#[from] RegressError),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ContainerError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self) -> Result<usize, ContainerError> {
        let n = self.u64()?;
        // every record is at least 8 bytes, so larger counts cannot fit
        usize::try_from(n).ok().filter(|&n| n <= self.bytes.len()).ok_or(ContainerError::Truncated(self.bytes.len()))
    }

    fn finish(&self) -> Result<(), ContainerError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(ContainerError::TrailingBytes(n)),
        }
    }
}

struct Header {
    channels: usize,
}

fn put_header(out: &mut Vec<u8>, magic: &[u8; 8], channels: usize, grid: &QuadratureGrid) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out.extend_from_slice(&grid.hash().to_le_bytes());
    out.extend_from_slice(&(grid.len() as u64).to_le_bytes());
}

fn read_header(
    r: &mut Reader<'_>,
    magic: &[u8; 8],
    expected: &'static str,
    grid: &QuadratureGrid,
) -> Result<Header, ContainerError> {
    if r.take(8).ok() != Some(&magic[..]) {
        return Err(ContainerError::BadMagic { expected });
    }
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let channels = r.u32()? as usize;
    let hash = r.u64()?;
    if hash != grid.hash() {
        return Err(ContainerError::GridMismatch { file: hash, grid: grid.hash() });
    }
    let nodes = r.u64()?;
    if nodes != grid.len() as u64 {
        return Err(ContainerError::NodeCountMismatch { file: nodes, grid: grid.len() });
    }
    Ok(Header { channels })
}

fn put_record(out: &mut Vec<u8>, fp: &Fingerprint) {
    let label = fp.provenance.as_deref().unwrap_or("");
    out.extend_from_slice(&(label.len() as u32).to_le_bytes());
    out.extend_from_slice(label.as_bytes());
    let rows = fp.frame.to_rows();
    let numbers = fp.center.iter().chain(rows.iter()).chain(fp.values());
    for v in numbers {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_record(
    r: &mut Reader<'_>,
    index: usize,
    channels: usize,
    grid: &Arc<QuadratureGrid>,
) -> Result<Fingerprint, ContainerError> {
    let len = r.u32()? as usize;
    let label = std::str::from_utf8(r.take(len)?).map_err(|_| ContainerError::InvalidLabel)?;
    let center = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
    let mut rows = [0.0; 9];
    for v in &mut rows {
        *v = r.f64()?;
    }
    let frame = CanonicalFrame::from_rows(&rows).ok_or(ContainerError::InvalidFrame(index))?;
    let n = channels * grid.len();
    if n * 8 > r.bytes.len() {
        return Err(ContainerError::Truncated(r.bytes.len()));
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let fp = Fingerprint::from_values(values, channels, grid.clone(), frame, center)?;
    Ok(if label.is_empty() { fp } else { fp.with_provenance(label) })
}

fn shared_layout(fps: &[Fingerprint], grid: &QuadratureGrid) -> Result<usize, ContainerError> {
    let channels = fps.first().map_or(1, Fingerprint::channels);
    if fps.iter().any(|f| f.grid_hash() != grid.hash() || f.channels() != channels) {
        return Err(ContainerError::MixedFingerprints);
    }
    Ok(channels)
}

/// Serializes fingerprints sampled on `grid`.
pub fn write_fingerprints(fps: &[Fingerprint], grid: &QuadratureGrid) -> Result<Vec<u8>, ContainerError> {
    let channels = shared_layout(fps, grid)?;
    let mut out = Vec::new();
    put_header(&mut out, &FINGERPRINT_MAGIC, channels, grid);
    out.extend_from_slice(&(fps.len() as u64).to_le_bytes());
    for fp in fps {
        put_record(&mut out, fp);
    }
    Ok(out)
}

/// Reads fingerprints, checking they were sampled on `grid`.
pub fn read_fingerprints(bytes: &[u8], grid: &Arc<QuadratureGrid>) -> Result<Vec<Fingerprint>, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r, &FINGERPRINT_MAGIC, "fingerprint", grid)?;
    let count = r.count()?;
    let fps = (0..count).map(|i| read_record(&mut r, i, header.channels, grid)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(fps)
}

fn kind_tag(kind: TargetKind) -> (u32, u32) {
    match kind {
        TargetKind::Scalar => (0, 0),
        TargetKind::PerAtomComponent(c) => (1, c as u32),
        TargetKind::MolecularComponent(c) => (2, c as u32),
    }
}

/// Serializes one scalar model or the components of a vector model.
pub fn write_models(models: &[&GPModel], grid: &QuadratureGrid) -> Result<Vec<u8>, ContainerError> {
    let all: Vec<Fingerprint> = models.iter().flat_map(|m| m.inputs().iter().cloned()).collect();
    let channels = shared_layout(&all, grid)?;
    let mut out = Vec::new();
    put_header(&mut out, &MODEL_MAGIC, channels, grid);
    out.extend_from_slice(&(models.len() as u32).to_le_bytes());
    for m in models {
        let (tag, component) = kind_tag(m.kind);
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&component.to_le_bytes());
        let hp = m.hyperparameters();
        for v in [hp.output_scale, hp.length_scale, hp.jitter] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for fp in m.inputs() {
            put_record(&mut out, fp);
        }
        for t in m.targets() {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads models back and refactorizes their covariance.
pub fn read_models(bytes: &[u8], grid: &Arc<QuadratureGrid>) -> Result<Vec<GPModel>, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r, &MODEL_MAGIC, "model", grid)?;
    let count = r.u32()?;
    let mut models = Vec::new();
    for _ in 0..count {
        let tag = r.u32()?;
        let component = r.u32()? as usize;
        let kind = match tag {
            0 => TargetKind::Scalar,
            1 => TargetKind::PerAtomComponent(component),
            2 => TargetKind::MolecularComponent(component),
            t => return Err(ContainerError::UnknownTargetKind(t)),
        };
        let hp = GPHyperparameters { output_scale: r.f64()?, length_scale: r.f64()?, jitter: r.f64()? };
        let n = r.count()?;
        let inputs = (0..n).map(|i| read_record(&mut r, i, header.channels, grid)).collect::<Result<Vec<_>, _>>()?;
        let targets = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut model = GPModel::with_hyperparameters(inputs, targets, hp)?;
        model.kind = kind;
        models.push(model);
    }
    r.finish()?;
    Ok(models)
}

/// One row per fingerprint: center id, the 9 frame entries row-major, then the values.
pub fn fingerprints_csv(fps: &[Fingerprint]) -> String {
    let mut out = String::from("center_id");
    for i in 0..3 {
        for j in 0..3 {
            let _ = write!(out, ",frame_{i}{j}");
        }
    }
    let width = fps.iter().map(Fingerprint::len).max().unwrap_or(0);
    for k in 0..width {
        let _ = write!(out, ",v{k}");
    }
    out.push('\n');
    for fp in fps {
        out.push_str(&csv_field(fp.provenance.as_deref().unwrap_or("")));
        for v in fp.frame.to_rows().iter().chain(fp.values()) {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Quotes a CSV field when it needs it.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
