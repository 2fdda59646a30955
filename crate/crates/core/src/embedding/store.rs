//! Binary embedding store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EMBS" | version: u16 = 1 | dim: u32 | count: u64 | count*dim f32, row-major
//! ```
//!
//! Row ids (and optional labels) live in a JSONL sidecar at `<path>.meta`
//! with one `{row, id, label?}` object per line.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{l2_norm, EmbeddingError, EmbeddingVector, Result, UNIT_NORM_TOLERANCE};

pub const STORE_MAGIC: &[u8; 4] = b"EMBS";
pub const STORE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

/// Dense row-major matrix of embeddings with one string id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl EmbeddingStore {
    /// Builds a store from raw rows. Checks shape, finiteness and id
    /// uniqueness; unit norm is checked at the file boundary (see
    /// [`EmbeddingStore::check_unit_norm`]) so that analysis code can also
    /// hold arbitrary point clouds.
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::Format("dim must be positive".into()));
        }
        if data.len() != dim * ids.len() {
            return Err(EmbeddingError::Format(format!(
                "{} values cannot form {} rows of width {dim}",
                data.len(),
                ids.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { dim, data, ids })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn from_vectors(ids: Vec<String>, vectors: &[EmbeddingVector]) -> Result<Self> {
        let dim = vectors.first().map(EmbeddingVector::dim).unwrap_or(super::DEFAULT_DIM);
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            if v.dim() != dim {
                return Err(EmbeddingError::DimMismatch { expected: dim, actual: v.dim() });
            }
            data.extend_from_slice(v.as_slice());
        }
        Self::new(dim, data, ids)
    }

    /// Rows with ids `"0"`, `"1"`, ...
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let count = if dim == 0 { 0 } else { data.len() / dim };
        Self::new(dim, data, (0..count).map(|i| i.to_string()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// New store holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            ids.push(self.ids[i].clone());
        }
        Self { dim: self.dim, data, ids }
    }

    /// Fails on the first row whose norm is off by more than the tolerance.
    pub fn check_unit_norm(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            let n = l2_norm(row);
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(EmbeddingError::Format(format!("row {i} has norm {n}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaRow {
    pub row: u64,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the binary store and its `.meta` sidecar.
pub fn write_store(path: &Path, store: &EmbeddingStore, labels: Option<&[u8]>) -> Result<()> {
    store.check_unit_norm()?;
    if let Some(l) = labels {
        if l.len() != store.count() {
            return Err(EmbeddingError::Format(format!(
                "{} labels for {} rows",
                l.len(),
                store.count()
            )));
        }
    }
    let dim = u32::try_from(store.dim)
        .map_err(|_| EmbeddingError::Format("dim does not fit in u32".into()))?;

    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(STORE_MAGIC)?;
    out.write_all(&STORE_VERSION.to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&(store.count() as u64).to_le_bytes())?;
    for x in &store.data {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;

    let mut meta = BufWriter::new(fs::File::create(meta_path(path))?);
    for (row, id) in store.ids.iter().enumerate() {
        let rec = MetaRow {
            row: row as u64,
            id: id.clone(),
            label: labels.map(|l| l[row]),
        };
        serde_json::to_writer(&mut meta, &rec).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        meta.write_all(b"\n")?;
    }
    meta.flush()?;
    Ok(())
}

/// Reads a store written by [`write_store`]. Without a sidecar the ids
/// default to row numbers.
pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::Format(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != STORE_MAGIC {
        return Err(EmbeddingError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != STORE_VERSION {
        return Err(EmbeddingError::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if dim == 0 {
        return Err(EmbeddingError::Format("dim is zero".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = (count as u128) * (dim as u128) * 4;
    if payload.len() as u128 != expected {
        return Err(EmbeddingError::Format(format!(
            "payload is {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    let count = count as usize;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let meta = meta_path(path);
    let ids = if meta.exists() {
        let rows = read_meta(&meta)?;
        if rows.len() != count {
            return Err(EmbeddingError::Format(format!(
                "sidecar has {} rows, store has {count}",
                rows.len()
            )));
        }
        rows.into_iter()
            .enumerate()
            .map(|(i, r)| {
                if r.row as usize != i {
                    Err(EmbeddingError::Format(format!("sidecar row {i} is numbered {}", r.row)))
                } else {
                    Ok(r.id)
                }
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..count).map(|i| i.to_string()).collect()
    };

    let store = EmbeddingStore::new(dim, data, ids).map_err(|e| match e {
        EmbeddingError::NonFinite => EmbeddingError::Format("non-finite value in payload".into()),
        other => other,
    })?;
    store.check_unit_norm()?;
    Ok(store)
}

/// Reads a `.meta` sidecar (or any JSONL of `{row, id, label?}`).
pub fn read_meta(path: &Path) -> Result<Vec<MetaRow>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetaRow = serde_json::from_str(&line)
            .map_err(|e| EmbeddingError::Format(format!("meta line {}: {e}", n + 1)))?;
        rows.push(rec);
    }
    Ok(rows)
}
