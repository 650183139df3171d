//! On-disk artifacts: knowledge-base snapshots, learning curves and JSON
//! reports. Every file is written to a sibling temporary and renamed into
//! place, so readers never see a half-written artifact.
//!
//! Snapshot layout: the 8-byte magic `MTL2RLKB`, a little-endian `u32`
//! header length, a JSON [`SnapshotHeader`], then `G`, `X`, `Y` and the
//! stored encodings as row-major little-endian `f64`.

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::metrics::Method;
use super::{HarnessError, Result};
use crate::lifelong::KnowledgeBase;

const MAGIC: &[u8; 8] = b"MTL2RLKB";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub version: u32,
    pub dim: usize,
    pub latent_dim: usize,
    pub eta: f64,
    pub tasks_seen: usize,
    pub n_encodings: usize,
    /// Master seed and training task ids the basis was learned from.
    pub master_seed: u64,
    pub task_ids: Vec<usize>,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(HarnessError::io(path, e));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn push_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn kb_payload(kb: &KnowledgeBase) -> Vec<u8> {
    let mut out = Vec::new();
    push_row_major(&mut out, &kb.g);
    push_row_major(&mut out, &kb.x);
    push_row_major(&mut out, &kb.y);
    for v in &kb.encodings {
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Lowercase hex SHA-256 of the basis, statistics and encodings.
pub fn kb_digest(kb: &KnowledgeBase) -> String {
    let mut h = Sha256::new();
    h.update((kb.dim() as u64).to_le_bytes());
    h.update((kb.latent_dim() as u64).to_le_bytes());
    h.update(kb.eta.to_le_bytes());
    h.update((kb.tasks_seen as u64).to_le_bytes());
    h.update(kb_payload(kb));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_kb(kb: &KnowledgeBase, master_seed: u64, task_ids: &[usize]) -> Result<Vec<u8>> {
    let header = SnapshotHeader {
        version: SNAPSHOT_VERSION,
        dim: kb.dim(),
        latent_dim: kb.latent_dim(),
        eta: kb.eta,
        tasks_seen: kb.tasks_seen,
        n_encodings: kb.encodings.len(),
        master_seed,
        task_ids: task_ids.to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&kb_payload(kb));
    Ok(out)
}

pub fn decode_kb(bytes: &[u8]) -> Result<(KnowledgeBase, SnapshotHeader)> {
    let corrupt = |m: &str| HarnessError::Snapshot(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing snapshot magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    // Peek at the version before insisting on the rest of the schema.
    let raw: serde_json::Value = serde_json::from_slice(body).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    let version = raw.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("header has no version"))?;
    if version != SNAPSHOT_VERSION as u64 {
        return Err(HarnessError::SnapshotVersion { found: version, expected: SNAPSHOT_VERSION });
    }
    let header: SnapshotHeader =
        serde_json::from_value(raw).map_err(|e| corrupt(&format!("header schema: {e}")))?;
    let (d, z, n) = (header.dim, header.latent_dim, header.n_encodings);
    let count = d
        .checked_mul(z)
        .and_then(|dz| dz.checked_mul(2))
        .and_then(|x| x.checked_add(z * z))
        .and_then(|x| x.checked_add(n.checked_mul(z)?))
        .ok_or_else(|| corrupt("header shapes overflow"))?;
    let payload = &bytes[12 + hlen..];
    if payload.len() != count * 8 {
        return Err(corrupt(&format!("payload has {} bytes, header implies {}", payload.len(), count * 8)));
    }
    let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |r: usize, c: usize| DMatrix::from_row_iterator(r, c, vals.by_ref().take(r * c));
    let g = take(d, z);
    let x = take(z, z);
    let y = take(d, z);
    let encodings = (0..n).map(|_| DVector::from_column_slice(take(1, z).as_slice())).collect();
    let kb = KnowledgeBase { g, x, y, eta: header.eta, tasks_seen: header.tasks_seen, encodings };
    if !kb.is_finite() {
        return Err(corrupt("non-finite values in snapshot"));
    }
    Ok((kb, header))
}

pub fn save_kb(path: &Path, kb: &KnowledgeBase, master_seed: u64, task_ids: &[usize]) -> Result<()> {
    write_atomic(path, &encode_kb(kb, master_seed, task_ids)?)
}

pub fn load_kb(path: &Path) -> Result<(KnowledgeBase, SnapshotHeader)> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_kb(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    method: String,
    task_id: usize,
    seed: u64,
    iteration: usize,
    #[serde(rename = "return")]
    value: f64,
}

pub type CurveKey = (Method, usize, u64);

/// `method,task_id,seed,iteration,return`, one row per point.
pub fn curves_to_csv<'a>(curves: impl IntoIterator<Item = (CurveKey, &'a [f64])>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((method, task_id, seed), curve) in curves {
        for (iteration, &value) in curve.iter().enumerate() {
            w.serialize(CurveRow { method: method.tag().to_string(), task_id, seed, iteration, value })?;
        }
    }
    w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn read_curves(path: &Path) -> Result<BTreeMap<CurveKey, Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: BTreeMap<CurveKey, Vec<f64>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: CurveRow = row?;
        let method = Method::from_tag(&row.method)
            .ok_or_else(|| HarnessError::Config(format!("unknown method {:?} in {}", row.method, path.display())))?;
        let curve = out.entry((method, row.task_id, row.seed)).or_default();
        if row.iteration != curve.len() {
            return Err(HarnessError::Config(format!(
                "{} {} seed {}: iteration {} out of order",
                row.method, row.task_id, row.seed, row.iteration
            )));
        }
        curve.push(row.value);
    }
    Ok(out)
}
