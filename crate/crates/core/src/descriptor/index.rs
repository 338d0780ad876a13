//! Flat descriptor index and brute-force dot-product retrieval.
//!
//! File layout (little endian):
//!
//! ```text
//! "P6DX" | version: u32 | dim: u32 | count: u64
//! count x (len: u32, utf-8 id bytes)
//! zero padding to a 4-byte boundary
//! count x dim f32 rows
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::ObjectEntry;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"P6DX";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorMode {
    #[default]
    Ffa,
    Cls,
}

impl std::str::FromStr for DescriptorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ffa" => Ok(DescriptorMode::Ffa),
            "cls" => Ok(DescriptorMode::Cls),
            other => Err(Error::invalid(format!("unknown descriptor mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub object_id: String,
    pub score: f64,
}

impl DescriptorIndex {
    /// Rows are L2-normalized and sorted by id.
    pub fn from_descriptors(dim: usize, mut items: Vec<(String, Vec<f32>)>) -> Result<Self> {
        items.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate object id {:?}", w[0].0)));
        }
        let mut rows = Vec::with_capacity(items.len() * dim);
        let mut ids = Vec::with_capacity(items.len());
        for (id, d) in items {
            if d.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: d.len(),
                });
            }
            let n = d.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Err(Error::ZeroNormAggregate);
            }
            rows.extend(d.iter().map(|&v| (v as f64 / n) as f32));
            ids.push(id);
        }
        Ok(DescriptorIndex { dim, ids, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Top-k rows by dot product with the normalized query; ties go to the smaller id.
    pub fn retrieve(&self, query: &[f32], k: usize) -> Result<Vec<Hit>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let n = query.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::invalid("query has zero norm"));
        }
        let q: Vec<f64> = query.iter().map(|&v| v as f64 / n).collect();
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (dot(&q, row), i))
            .collect();
        // ids are sorted, so row order breaks ties by id
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| Hit {
                object_id: self.ids[i].clone(),
                score,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.rows.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        while out.len() % 4 != 0 {
            out.push(0);
        }
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, m.to_string());
        if bytes.len() < 20 || &bytes[..4] != INDEX_MAGIC {
            return Err(bad("bad index magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let version = u32_at(4);
        if version != INDEX_VERSION {
            return Err(bad(&format!("unsupported index version {version}")));
        }
        let dim = u32_at(8) as usize;
        let mut c = [0u8; 8];
        c.copy_from_slice(&bytes[12..20]);
        let count = u64::from_le_bytes(c) as usize;
        let mut off = 20;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            if off + 4 > bytes.len() {
                return Err(bad("truncated id table"));
            }
            let len = u32_at(off) as usize;
            off += 4;
            let raw = bytes.get(off..off + len).ok_or_else(|| bad("truncated id table"))?;
            ids.push(String::from_utf8(raw.to_vec()).map_err(|_| bad("id is not UTF-8"))?);
            off += len;
        }
        off = (off + 3) & !3;
        let payload = bytes.get(off..).ok_or_else(|| bad("missing rows"))?;
        if payload.len() != count * dim * 4 {
            return Err(bad(&format!("row payload has {} bytes, expected {}", payload.len(), count * dim * 4)));
        }
        let rows = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(DescriptorIndex { dim, ids, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn dot(q: &[f64], row: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut qc = q.chunks_exact(4);
    let mut rc = row.chunks_exact(4);
    for (a, b) in (&mut qc).zip(&mut rc) {
        for l in 0..4 {
            acc[l] += a[l] * b[l] as f64;
        }
    }
    let tail: f64 = qc.remainder().iter().zip(rc.remainder()).map(|(a, &b)| a * b as f64).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Index over the chosen descriptor of each entry. An empty entry list gives an
/// empty index of dimension 0.
pub fn build_index(entries: &[ObjectEntry], mode: DescriptorMode) -> Result<DescriptorIndex> {
    let dim = entries.first().map_or(0, |e| e.dim());
    let items = entries
        .iter()
        .map(|e| {
            let d = match mode {
                DescriptorMode::Ffa => e.ffa_descriptor.clone(),
                DescriptorMode::Cls => e.cls_descriptor.clone(),
            };
            (e.object_id.clone(), d)
        })
        .collect();
    DescriptorIndex::from_descriptors(dim, items)
}

pub fn retrieve(query: &[f32], index: &DescriptorIndex, k: usize) -> Result<Vec<Hit>> {
    index.retrieve(query, k)
}
