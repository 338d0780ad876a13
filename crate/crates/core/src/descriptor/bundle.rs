//! Per-object rendered-view records and their on-disk bundle layout.
//!
//! A bundle is one directory per object:
//!
//! ```text
//! views.tnsr      [M, rows, cols, dim]  patch tokens
//! fg_masks.tnsr   [M, rows, cols]       1.0 = foreground
//! cls.tnsr        [M, dim]              CLS token per view
//! rotations.json  [[w, x, y, z], ...]   render rotation per view
//! extents.json    [[o_w, o_h, o_d], ...] camera-frame extents, meters at native scale
//! object.json     optional {object_id, mesh, native_size, native_size_trusted}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::{cls_aggregate, ffa_aggregate};
use super::grid::PatchGrid;
use crate::error::{Error, Result};
use crate::geometry::Rotation;
use crate::io::{read_json, write_canonical, Tensor};

/// Default number of rendered views per object.
pub const DEFAULT_VIEW_COUNT: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub rotation: Rotation,
    pub grid: PatchGrid,
    pub cls_token: Vec<f32>,
    /// (o_w, o_h, o_d) of the object rendered at `rotation`, camera frame.
    pub extents: [f64; 3],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObjectMeta {
    pub object_id: String,
    #[serde(default)]
    pub mesh: Option<String>,
    /// Size of the model at its native scale, in the units of `extents`,
    /// measured the same way as a relative scale: the largest distance from
    /// the center along the principal axis (half the longest dimension for a box).
    pub native_size: f64,
    #[serde(default = "default_true")]
    pub native_size_trusted: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct ObjectEntry {
    pub object_id: String,
    pub views: Vec<ViewRecord>,
    pub ffa_descriptor: Vec<f32>,
    pub cls_descriptor: Vec<f32>,
    pub mesh_ref: Option<String>,
    pub native_size: f64,
    pub native_size_trusted: bool,
    inv_norms: Vec<Vec<f64>>,
}

impl ObjectEntry {
    /// Validates the views and computes both descriptors. `expected_views`
    /// enforces the configured view count when given.
    pub fn new(meta: ObjectMeta, views: Vec<ViewRecord>, expected_views: Option<usize>) -> Result<Self> {
        let first = views.first().ok_or_else(|| Error::invalid("object has no views"))?;
        if let Some(m) = expected_views {
            if views.len() != m {
                return Err(Error::DimMismatch {
                    expected: m,
                    got: views.len(),
                });
            }
        }
        let layout = first.grid.clone();
        for v in &views {
            if !v.grid.same_layout(&layout) {
                return Err(Error::invalid(format!(
                    "{}: view grids differ in shape ({}x{}x{} vs {}x{}x{})",
                    meta.object_id,
                    v.grid.rows(),
                    v.grid.cols(),
                    v.grid.dim(),
                    layout.rows(),
                    layout.cols(),
                    layout.dim()
                )));
            }
            if v.cls_token.len() != layout.dim() {
                return Err(Error::DimMismatch {
                    expected: layout.dim(),
                    got: v.cls_token.len(),
                });
            }
            if v.extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return Err(Error::invalid(format!("{}: view extents must be positive", meta.object_id)));
            }
        }
        if !(meta.native_size > 0.0 && meta.native_size.is_finite()) {
            return Err(Error::invalid(format!("{}: native size must be positive", meta.object_id)));
        }
        let ffa_descriptor = ffa_aggregate(views.iter().map(|v| &v.grid))?;
        let cls: Vec<&[f32]> = views.iter().map(|v| v.cls_token.as_slice()).collect();
        let cls_descriptor = cls_aggregate(&cls)?;
        let inv_norms = views.iter().map(|v| v.grid.inverse_token_norms()).collect();
        Ok(ObjectEntry {
            object_id: meta.object_id,
            views,
            ffa_descriptor,
            cls_descriptor,
            mesh_ref: meta.mesh,
            native_size: meta.native_size,
            native_size_trusted: meta.native_size_trusted,
            inv_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.ffa_descriptor.len()
    }

    /// Per-patch inverse norms of view `j`'s tokens (0 for background).
    pub(crate) fn template_inv_norms(&self, j: usize) -> &[f64] {
        &self.inv_norms[j]
    }

    pub fn meta(&self) -> ObjectMeta {
        ObjectMeta {
            object_id: self.object_id.clone(),
            mesh: self.mesh_ref.clone(),
            native_size: self.native_size,
            native_size_trusted: self.native_size_trusted,
        }
    }

    pub fn load(dir: &Path, expected_views: Option<usize>) -> Result<Self> {
        let (meta, views) = read_bundle(dir)?;
        ObjectEntry::new(meta, views, expected_views).map_err(|e| match e {
            Error::Format { .. } | Error::Io { .. } => e,
            other => Error::format(dir, other.to_string()),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_bundle(dir, &self.meta(), &self.views)
    }
}

pub fn read_bundle(dir: &Path) -> Result<(ObjectMeta, Vec<ViewRecord>)> {
    let p = |name: &str| dir.join(name);
    let views = Tensor::read(&p("views.tnsr"))?;
    views.expect_shape(&[None, None, None, None], &p("views.tnsr"))?;
    let (m, rows, cols, dim) = (views.shape()[0], views.shape()[1], views.shape()[2], views.shape()[3]);
    let masks = Tensor::read(&p("fg_masks.tnsr"))?;
    masks.expect_shape(&[Some(m), Some(rows), Some(cols)], &p("fg_masks.tnsr"))?;
    let cls = Tensor::read(&p("cls.tnsr"))?;
    cls.expect_shape(&[Some(m), Some(dim)], &p("cls.tnsr"))?;
    let rotations: Vec<[f64; 4]> = read_json(&p("rotations.json"))?;
    let extents: Vec<[f64; 3]> = read_json(&p("extents.json"))?;
    if rotations.len() != m {
        return Err(Error::format(&p("rotations.json"), format!("{} rotations for {m} views", rotations.len())));
    }
    if extents.len() != m {
        return Err(Error::format(&p("extents.json"), format!("{} extents for {m} views", extents.len())));
    }
    let meta_path = p("object.json");
    let meta = if meta_path.exists() {
        read_json::<ObjectMeta>(&meta_path)?
    } else {
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        // without metadata the extents themselves bound the native size
        let size = 0.5 * extents.iter().flat_map(|e| e.iter().copied()).fold(0.0, f64::max);
        ObjectMeta {
            object_id: id,
            mesh: None,
            native_size: size,
            native_size_trusted: false,
        }
    };
    let per_view = rows * cols * dim;
    let vdata = views.data();
    let mdata = masks.data();
    let cdata = cls.data();
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let [w, x, y, z] = rotations[j];
        let rotation =
            Rotation::from_wxyz(w, x, y, z).map_err(|e| Error::format(&p("rotations.json"), format!("view {j}: {e}")))?;
        let fg = mdata[j * rows * cols..(j + 1) * rows * cols].iter().map(|&v| v > 0.5).collect();
        let grid = PatchGrid::new(rows, cols, dim, vdata[j * per_view..(j + 1) * per_view].to_vec(), fg)
            .map_err(|e| Error::format(&p("views.tnsr"), e.to_string()))?;
        out.push(ViewRecord {
            rotation,
            grid,
            cls_token: cdata[j * dim..(j + 1) * dim].to_vec(),
            extents: extents[j],
        });
    }
    Ok((meta, out))
}

pub fn write_bundle(dir: &Path, meta: &ObjectMeta, views: &[ViewRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = views.first().ok_or_else(|| Error::invalid("no views to write"))?;
    let (rows, cols, dim) = (first.grid.rows(), first.grid.cols(), first.grid.dim());
    let m = views.len();
    let mut vdata = Vec::with_capacity(m * rows * cols * dim);
    let mut mdata = Vec::with_capacity(m * rows * cols);
    let mut cdata = Vec::with_capacity(m * dim);
    for v in views {
        vdata.extend_from_slice(v.grid.data());
        mdata.extend(v.grid.foreground().iter().map(|&f| if f { 1.0f32 } else { 0.0 }));
        cdata.extend_from_slice(&v.cls_token);
    }
    Tensor::new(vec![m, rows, cols, dim], vdata)?.write(&dir.join("views.tnsr"))?;
    Tensor::new(vec![m, rows, cols], mdata)?.write(&dir.join("fg_masks.tnsr"))?;
    Tensor::new(vec![m, dim], cdata)?.write(&dir.join("cls.tnsr"))?;
    let rotations: Vec<[f64; 4]> = views.iter().map(|v| v.rotation.to_wxyz()).collect();
    let extents: Vec<[f64; 3]> = views.iter().map(|v| v.extents).collect();
    write_canonical(&dir.join("rotations.json"), &rotations)?;
    write_canonical(&dir.join("extents.json"), &extents)?;
    write_canonical(&dir.join("object.json"), meta)
}

/// Sorted list of bundle directories (those containing `views.tnsr`) under `root`.
pub fn list_bundles(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join("views.tnsr").exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
