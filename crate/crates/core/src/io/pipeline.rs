//! Documents exchanged between pipeline stages: proposals, alignment results,
//! tracking seeds, trajectories and ground truth.
//!
//! Relative paths inside a document are resolved against the directory named
//! by its consumer (the config directory for pipeline outputs, the document's
//! own directory for proposals and ground truth).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::{read_json, PoseRecord};
use super::tensor::Tensor;
use crate::align::{square_crop, Proposal, CROP_PADDING, CROP_SIZE};
use crate::descriptor::PatchGrid;
use crate::error::{Error, Result};
use crate::geometry::{BBox, BinaryMask, CameraIntrinsics, Pose};
use crate::metrics::SymmetrySet;
use crate::scale::DepthMap;
use crate::track::TrajectoryFrame;

/// Frame-level detections fed to alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalFile {
    pub image_size: [u32; 2],
    /// Known intrinsics; the focal prior is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    pub proposals: Vec<ProposalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub id: String,
    pub frame: usize,
    /// `[cx, cy, w, h]`, pixels.
    pub bbox: [f64; 4],
    /// Patch grid, shape `[rows, cols, dim]`.
    pub grid: String,
    /// Patch foreground, shape `[rows, cols]`; derived from `mask` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fg: Option<String>,
    /// Binary mask, shape `[h, w]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Depth map of the frame, shape `[h, w]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    /// Text-image embedding for the scale database, shape `[dim]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
    /// CLS token of the crop, shape `[dim]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls: Option<String>,
}

/// A proposal with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct LoadedProposal {
    pub id: String,
    pub proposal: Proposal,
    pub depth: Option<DepthMap>,
    pub cls: Option<Vec<f32>>,
}

fn read_vector(path: &Path) -> Result<Vec<f32>> {
    let t = Tensor::read(path)?;
    t.expect_shape(&[None], path)?;
    Ok(t.into_data())
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let t = Tensor::read(path)?;
    t.expect_shape(&[None, None], path)?;
    let (h, w) = (t.shape()[0] as u32, t.shape()[1] as u32);
    BinaryMask::from_bits(w, h, t.data().iter().map(|&v| v > 0.5).collect())
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Tensor::new(vec![mask.height() as usize, mask.width() as usize], data)?.write(path)
}

/// Patch foreground from an image mask: a patch is foreground when the mask is
/// set under its center, mapped back through the square crop.
pub fn grid_foreground_from_mask(mask: &BinaryMask, bbox: &BBox, rows: usize, cols: usize) -> Vec<bool> {
    let win = square_crop(bbox, CROP_PADDING, CROP_SIZE);
    let mut fg = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let u = (c as f64 + 0.5) / cols as f64 - 0.5;
            let v = (r as f64 + 0.5) / rows as f64 - 0.5;
            let (x, y) = (win.cx + u * win.side, win.cy + v * win.side);
            let on = x >= 0.0
                && y >= 0.0
                && (x as u32) < mask.width()
                && (y as u32) < mask.height()
                && mask.get(x as u32, y as u32);
            fg.push(on);
        }
    }
    fg
}

impl ProposalRecord {
    pub fn load(&self, base: &Path) -> Result<LoadedProposal> {
        let [cx, cy, w, h] = self.bbox;
        let bbox = BBox::new(cx, cy, w, h).map_err(|e| Error::invalid(format!("proposal {}: {e}", self.id)))?;
        let gpath = base.join(&self.grid);
        let g = Tensor::read(&gpath)?;
        g.expect_shape(&[None, None, None], &gpath)?;
        let (rows, cols, dim) = (g.shape()[0], g.shape()[1], g.shape()[2]);
        let mask = self.mask.as_ref().map(|m| read_mask(&base.join(m))).transpose()?;
        let fg = match (&self.fg, &mask) {
            (Some(f), _) => {
                let fpath = base.join(f);
                let t = Tensor::read(&fpath)?;
                t.expect_shape(&[Some(rows), Some(cols)], &fpath)?;
                t.data().iter().map(|&v| v > 0.5).collect()
            }
            (None, Some(m)) => grid_foreground_from_mask(m, &bbox, rows, cols),
            (None, None) => vec![true; rows * cols],
        };
        let query_grid = PatchGrid::new(rows, cols, dim, g.into_data(), fg).map_err(|e| Error::format(&gpath, e.to_string()))?;
        let depth = self.depth.as_ref().map(|d| DepthMap::read(&base.join(d))).transpose()?;
        let clip_embedding = self.clip.as_ref().map(|c| read_vector(&base.join(c))).transpose()?;
        let cls = self.cls.as_ref().map(|c| read_vector(&base.join(c))).transpose()?;
        let proposal = Proposal {
            bbox,
            mask,
            query_grid,
            clip_embedding,
            frame_index: self.frame,
        };
        proposal.validate().map_err(|e| Error::invalid(format!("proposal {}: {e}", self.id)))?;
        Ok(LoadedProposal {
            id: self.id.clone(),
            proposal,
            depth,
            cls,
        })
    }
}

/// Scale bookkeeping for one aligned proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    /// Fused metric scale in meters (relative-size convention).
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_i: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRecord {
    pub proposal: String,
    pub frame: usize,
    pub object_id: String,
    pub retrieval_score: f64,
    pub pose: Pose,
    pub view_index: usize,
    pub score: f64,
    pub scale: ScaleRecord,
    /// Mesh of the retrieved object, relative to the config directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    /// Meters per mesh unit implied by `scale.s`.
    pub mesh_scale: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOutput {
    pub config: serde_json::Value,
    pub intrinsics: CameraIntrinsics,
    pub crop_padding: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub results: Vec<AlignRecord>,
}

/// Model-frame seed points and their pixels in the initialization frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFile {
    pub config: serde_json::Value,
    pub object_id: String,
    pub init_frame: usize,
    pub init_pose: Pose,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    pub mesh_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub points3d: Vec<[f64; 3]>,
    pub points2d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutput {
    pub config: serde_json::Value,
    pub object_id: String,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    pub mesh_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<TrajectoryFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryJson {
    pub axis: [f64; 3],
    /// Fold count; a continuous symmetry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl SymmetryJson {
    pub fn to_set(&self) -> Result<SymmetrySet> {
        let axis = nalgebra::Vector3::from(self.axis);
        match self.order {
            Some(n) => SymmetrySet::cyclic(&axis, n),
            None => SymmetrySet::continuous(&axis),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    /// Mesh path relative to the ground-truth file.
    pub mesh: String,
    /// Meters per mesh unit.
    pub mesh_scale: f64,
    /// Object size in meters (relative-size convention).
    pub size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub proposal: String,
    pub object_id: String,
    pub frame: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtVideo {
    pub object_id: String,
    pub poses: Vec<PoseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intrinsics: CameraIntrinsics,
    pub objects: BTreeMap<String, GtObject>,
    #[serde(default)]
    pub instances: Vec<GtInstance>,
    #[serde(default)]
    pub videos: Vec<GtVideo>,
}

impl GroundTruth {
    pub fn read(path: &Path) -> Result<Self> {
        let gt: GroundTruth = read_json(path)?;
        gt.intrinsics.validate().map_err(|e| Error::format(path, e.to_string()))?;
        for i in &gt.instances {
            if !gt.objects.contains_key(&i.object_id) {
                return Err(Error::format(path, format!("instance {} names unknown object {:?}", i.proposal, i.object_id)));
            }
        }
        for v in &gt.videos {
            if !gt.objects.contains_key(&v.object_id) {
                return Err(Error::format(path, format!("video names unknown object {:?}", v.object_id)));
            }
        }
        Ok(gt)
    }
}
