use serde::{Deserialize, Serialize};

use super::single::{average_recall, linspace};
use crate::error::{Error, Result};

/// AR threshold sets. CH is in meters, pCH in squared pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub cou: Vec<f64>,
    pub ch: Vec<f64>,
    pub pch: Vec<f64>,
}

impl Thresholds {
    /// Default sets for an evaluation image with diagonal `diag` pixels.
    pub fn for_diagonal(diag: f64) -> Self {
        Thresholds {
            cou: linspace(0.05, 0.5, 10),
            ch: linspace(0.01, 0.10, 10),
            pch: linspace((0.01 * diag).powi(2), (0.1 * diag).powi(2), 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub cou: f64,
    pub ch: f64,
    pub pch: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub id: String,
    pub frames: usize,
    pub e_rot_deg: f64,
    pub e_proj_pct: f64,
    pub e_depth: f64,
    pub origin_offset: [f64; 3],
    pub origin_clamped: bool,
    pub skipped_frames: usize,
}

/// Average recall per single-frame metric, and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArTable {
    pub ar: f64,
    pub ar_cou: f64,
    pub ar_ch: f64,
    pub ar_pch: f64,
}

/// Mean tracking errors over videos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub relative_rotation_deg: f64,
    pub relative_projected_translation_pct: f64,
    pub relative_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub thresholds: Thresholds,
    pub instances: Vec<InstanceRow>,
    pub videos: Vec<VideoRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar: Option<ArTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSummary>,
    pub notes: Vec<String>,
}

/// Conventions every report states, so numbers are never compared across them.
pub const REPORT_NOTES: &[&str] = &[
    "pch uses squared pixel distances: sum of the two directional means",
    "ch is the average of the two directional mean distances, meters",
    "ar averages over thresholds only, with strict error < threshold",
    "cou of two empty masks is 1",
];

impl MetricReport {
    pub fn new(thresholds: Thresholds, instances: Vec<InstanceRow>, videos: Vec<VideoRow>) -> Result<Self> {
        let values = |f: fn(&InstanceRow) -> f64| instances.iter().map(f).collect::<Vec<f64>>();
        if instances.iter().any(|r| !(r.cou >= 0.0 && r.ch >= 0.0 && r.pch >= 0.0)) {
            return Err(Error::invalid("instance errors must be non-negative"));
        }
        let ar = if instances.is_empty() {
            None
        } else {
            let ar_cou = average_recall(&values(|r| r.cou), &thresholds.cou)?;
            let ar_ch = average_recall(&values(|r| r.ch), &thresholds.ch)?;
            let ar_pch = average_recall(&values(|r| r.pch), &thresholds.pch)?;
            Some(ArTable {
                ar: (ar_cou + ar_ch + ar_pch) / 3.0,
                ar_cou,
                ar_ch,
                ar_pch,
            })
        };
        let tracking = (!videos.is_empty()).then(|| {
            let n = videos.len() as f64;
            TrackingSummary {
                relative_rotation_deg: videos.iter().map(|v| v.e_rot_deg).sum::<f64>() / n,
                relative_projected_translation_pct: videos.iter().map(|v| v.e_proj_pct).sum::<f64>() / n,
                relative_depth: videos.iter().map(|v| v.e_depth).sum::<f64>() / n,
            }
        });
        Ok(MetricReport {
            thresholds,
            instances,
            videos,
            ar,
            tracking,
            notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
        })
    }
}
