//! File formats shared across the pipeline.

pub mod json;
pub mod pipeline;
pub mod tensor;

pub use json::{
    canonicalize, read_json, read_pose_records, to_canonical_string, write_canonical, write_pose_records, PoseJson,
    PoseRecord,
};
pub use pipeline::{
    grid_foreground_from_mask, read_mask, write_mask, AlignOutput, AlignRecord, GroundTruth, GtInstance, GtObject,
    GtVideo, LoadedProposal, ProposalFile, ProposalRecord, ScaleRecord, SeedFile, SymmetryJson, TrajectoryOutput,
};
pub use tensor::Tensor;
