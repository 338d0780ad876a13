//! Track-based refinement: seed model points from the best single-frame
//! alignment, then solve PnP per frame against external 2D point tracks.

pub mod pnp;
pub mod trajectory;

pub use pnp::{solve_pnp, solve_pnp_ransac, PnpConfig, PnpSolution};
pub use trajectory::{
    fill_trajectory, frame_seed, refine_trajectory, seed_correspondences, select_init_frame, solve_frame,
    CorrespondenceSet, FrameStatus, PoseTrajectory, TrackConfig, TrackFile, TrackFrame, TrajectoryFrame,
    DEFAULT_RMS_GATE, DEFAULT_SEED_POINTS, MIN_SEEDS,
};
