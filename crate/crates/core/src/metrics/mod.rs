//! Single-frame pose metrics (CoU, CH, pCH, average recall) and the
//! relative-velocity tracking errors.

pub mod raster;
pub mod report;
pub mod single;
pub mod tracking;

pub use raster::{rasterize_silhouette, render_depth, SilhouetteMask};
pub use report::{ArTable, InstanceRow, MetricReport, Thresholds, TrackingSummary, VideoRow};
pub use single::{average_recall, chamfer, chamfer_points, cou, linspace, projected_chamfer, projected_chamfer_points};
pub use tracking::{
    correct_origin, gamma_set, track_depth_error, track_proj_error, track_rot_error, OriginCorrection, ProjError,
    SymmetrySet, TrackEvalConfig,
};
