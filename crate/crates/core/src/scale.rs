//! Absolute object scale: relative sizes from a depth map, metric priors from a
//! text-description database, and a single scene-wide median correction.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, BinaryMask, CameraIntrinsics};
use crate::io::Tensor;

/// Minimum number of valid masked depth pixels for a relative scale.
pub const MIN_CLOUD_POINTS: usize = 10;
/// Neighbors consulted in the scale database.
pub const DEFAULT_K_NEIGHBORS: usize = 5;
/// Scale used when no depth map is available, meters.
pub const CONSTANT_SCALE_FALLBACK: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    /// Pixels with non-positive or non-finite depth are invalid.
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::DimMismatch {
                expected: width as usize * height as usize,
                got: values.len(),
            });
        }
        Ok(DepthMap { width, height, values })
    }

    pub fn from_tensor(t: &Tensor, origin: &Path) -> Result<Self> {
        t.expect_shape(&[None, None], origin)?;
        let (h, w) = (t.shape()[0], t.shape()[1]);
        Self::new(w as u32, h as u32, t.data().iter().map(|&v| v as f64).collect())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tensor(&Tensor::read(path)?, path)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.height as usize, self.width as usize], &self.values).expect("shape matches")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let v = self.values[(y * self.width + x) as usize];
        (v > 0.0 && v.is_finite()).then_some(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same map with every depth multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }
}

/// How the size along the principal axis is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Largest distance from the centroid along the principal axis.
    #[default]
    MaxProjection,
    /// Full extent (max - min) along the principal axis.
    Range,
}

/// Principal axis of a centered cloud (unit vector of largest variance).
pub fn principal_axis(centered: &[Vector3<f64>]) -> Vector3<f64> {
    let mut cov = Matrix3::zeros();
    for p in centered {
        cov += p * p.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imax();
    eig.eigenvectors.column(i).into_owned()
}

/// Size of a point cloud along its principal axis.
pub fn cloud_scale(points: &[Vector3<f64>], mode: ScaleMode) -> Result<f64> {
    if points.len() < MIN_CLOUD_POINTS {
        return Err(Error::DegenerateCloud(points.len()));
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let centered: Vec<Vector3<f64>> = points.iter().map(|p| p - c).collect();
    let axis = principal_axis(&centered);
    let proj = centered.iter().map(|p| p.dot(&axis));
    Ok(match mode {
        ScaleMode::MaxProjection => proj.fold(0.0, |m, v| m.max(v.abs())),
        ScaleMode::Range => {
            let (lo, hi) = proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        }
    })
}

/// Back-projects the masked pixels with valid depth (pixel centers).
pub fn masked_cloud(depth: &DepthMap, mask: &BinaryMask, k: &CameraIntrinsics) -> Result<Vec<Vector3<f64>>> {
    if mask.width() != depth.width() || mask.height() != depth.height() {
        return Err(Error::invalid(format!(
            "mask is {}x{} but depth map is {}x{}",
            mask.width(),
            mask.height(),
            depth.width(),
            depth.height()
        )));
    }
    let mut pts = Vec::new();
    for (x, y) in mask.pixels() {
        if let Some(d) = depth.get(x, y) {
            pts.push(backproject(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5), d, k)?);
        }
    }
    Ok(pts)
}

/// Relative object size in depth-map units.
pub fn relative_scale(depth: &DepthMap, mask: &BinaryMask, k: &CameraIntrinsics, mode: ScaleMode) -> Result<f64> {
    cloud_scale(&masked_cloud(depth, mask, k)?, mode)
}

/// Text descriptions with metric sizes and unit-norm text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDatabase {
    texts: Vec<String>,
    scales: Vec<f64>,
    dim: usize,
    embeddings: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScaleLine {
    text: String,
    scale_m: f64,
}

impl ScaleDatabase {
    pub fn new(texts: Vec<String>, scales: Vec<f64>, dim: usize, embeddings: Vec<f32>) -> Result<Self> {
        if texts.len() != scales.len() || embeddings.len() != texts.len() * dim {
            return Err(Error::DimMismatch {
                expected: texts.len() * dim,
                got: embeddings.len(),
            });
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("scale database entry with scale {s}")));
        }
        let mut normed = Vec::with_capacity(embeddings.len());
        for row in embeddings.chunks_exact(dim.max(1)) {
            let n = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Err(Error::ZeroNormAggregate);
            }
            normed.extend(row.iter().map(|&v| (v as f64 / n) as f32));
        }
        Ok(ScaleDatabase {
            texts,
            scales,
            dim,
            embeddings: normed,
        })
    }

    /// Reads `entries.jsonl` style text plus the aligned embedding tensor `[n, dim]`.
    pub fn load(jsonl: &Path, embeddings: &Path) -> Result<Self> {
        let file = std::fs::File::open(jsonl).map_err(|e| Error::io(jsonl, e))?;
        let mut texts = Vec::new();
        let mut scales = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(jsonl, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScaleLine =
                serde_json::from_str(&line).map_err(|e| Error::format(jsonl, format!("line {}: {e}", i + 1)))?;
            texts.push(rec.text);
            scales.push(rec.scale_m);
        }
        let t = Tensor::read(embeddings)?;
        t.expect_shape(&[Some(texts.len()), None], embeddings)?;
        let dim = t.shape()[1];
        Self::new(texts, scales, dim, t.into_data()).map_err(|e| Error::format(jsonl, e.to_string()))
    }

    pub fn save(&self, jsonl: &Path, embeddings: &Path) -> Result<()> {
        let mut out = String::new();
        for (t, s) in self.texts.iter().zip(&self.scales) {
            out.push_str(&serde_json::to_string(&ScaleLine {
                text: t.clone(),
                scale_m: *s,
            })
            .expect("line serializes"));
            out.push('\n');
        }
        std::fs::write(jsonl, out).map_err(|e| Error::io(jsonl, e))?;
        Tensor::new(vec![self.len(), self.dim], self.embeddings.clone())?.write(embeddings)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn text(&self, i: usize) -> &str {
        &self.texts[i]
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.scales[i]
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[(v.len() - 1) / 2])
}

/// Median metric size of the `k_neighbors` entries most similar to the
/// embedding (dot product; ties to the earlier entry).
pub fn lookup_metric_scale(object_embedding: &[f32], db: &ScaleDatabase, k_neighbors: usize) -> Result<f64> {
    if db.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if object_embedding.len() != db.dim {
        return Err(Error::DimMismatch {
            expected: db.dim,
            got: object_embedding.len(),
        });
    }
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let mut scored: Vec<(f64, usize)> = (0..db.len())
        .map(|i| {
            let d: f64 = object_embedding.iter().zip(db.embedding(i)).map(|(&a, &b)| a as f64 * b as f64).sum();
            (d, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top: Vec<f64> = scored.iter().take(k_neighbors).map(|&(_, i)| db.scales[i]).collect();
    Ok(lower_median(&top).expect("non-empty"))
}

/// Scene factor ρ = median of m_i / r_i over objects with both values, and the
/// fused scales s_i = r_i·ρ for every object.
pub fn global_rescale(estimates: &[(f64, Option<f64>)]) -> Result<(f64, Vec<f64>)> {
    if let Some((r, _)) = estimates.iter().find(|(r, _)| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid(format!("relative scale must be positive, got {r}")));
    }
    let ratios: Vec<f64> = estimates
        .iter()
        .filter_map(|&(r, m)| m.filter(|m| *m > 0.0 && m.is_finite()).map(|m| m / r))
        .collect();
    let rho = lower_median(&ratios).ok_or_else(|| Error::invalid("no object has both a relative scale and a metric prior"))?;
    Ok((rho, estimates.iter().map(|(r, _)| r * rho).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub object_id: String,
    pub r: f64,
    pub m: Option<f64>,
    pub s: f64,
    pub rho_i: Option<f64>,
}

/// Runs the global rescale and packages per-object records.
pub fn fuse_scales(inputs: &[(String, f64, Option<f64>)]) -> Result<(f64, Vec<ScaleEstimate>)> {
    let pairs: Vec<(f64, Option<f64>)> = inputs.iter().map(|(_, r, m)| (*r, *m)).collect();
    let (rho, s) = global_rescale(&pairs)?;
    let out = inputs
        .iter()
        .zip(s)
        .map(|((id, r, m), s)| ScaleEstimate {
            object_id: id.clone(),
            r: *r,
            m: *m,
            s,
            rho_i: m.map(|m| m / r),
        })
        .collect();
    Ok((rho, out))
}
