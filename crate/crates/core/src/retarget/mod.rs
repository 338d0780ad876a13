//! Retargeting a camera-frame object trajectory to a 7-DoF arm holding the object.

pub mod chain;
pub mod ilqr;

use nalgebra::{Matrix3, Vector3};

pub use chain::{body_jacobian, forward_kinematics, inverse_kinematics, inverse_kinematics_multistart, jacobian, Joint, KinematicChain, PANDA_READY};
pub use ilqr::{
    cost_gradient, optimize_trajectory, trajectory_cost, JointStep, JointTrajectory, RetargetProblem, RetargetWeights,
    DEFAULT_MAX_ITERATIONS, DEFAULT_REL_TOL,
};

use crate::geometry::{Pose, Rotation};

/// Point the default camera looks at, robot frame (meters).
pub const DEFAULT_LOOK_AT: [f64; 3] = [0.5, 0.0, 0.3];
/// Camera distance from the look-at point, meters.
pub const DEFAULT_CAMERA_DISTANCE: f64 = 1.5;
/// Camera elevation above the horizontal, degrees.
pub const DEFAULT_CAMERA_ELEVATION_DEG: f64 = 30.0;

/// Camera pose in the robot frame for a camera in front of the robot, looking
/// back at `look_at` from `distance` at `elevation_deg` above the horizontal.
/// Camera axes follow the image convention: x right, y down, z forward.
pub fn camera_pose_looking_at(look_at: Vector3<f64>, distance: f64, elevation_deg: f64) -> Pose {
    let e = elevation_deg.to_radians();
    let eye = look_at + Vector3::new(e.cos(), 0.0, e.sin()) * distance;
    let z = (look_at - eye).normalize();
    let x = (-Vector3::z()).cross(&z).normalize();
    let y = z.cross(&x);
    Pose::new(Rotation::from_matrix(&Matrix3::from_columns(&[x, y, z])), eye)
}

/// Default camera-to-robot transform T_RC.
pub fn default_t_rc() -> Pose {
    camera_pose_looking_at(Vector3::from(DEFAULT_LOOK_AT), DEFAULT_CAMERA_DISTANCE, DEFAULT_CAMERA_ELEVATION_DEG)
}

/// Expresses camera-frame poses in the robot frame: T_RC · T_t.
pub fn camera_to_robot(poses: &[Pose], t_rc: &Pose) -> Vec<Pose> {
    poses.iter().map(|p| *t_rc * *p).collect()
}

/// Re-anchors a trajectory so it starts at `start` while keeping every
/// transform relative to the first pose: start · traj[0]^-1 · traj[t].
pub fn relative_reference(traj: &[Pose], start: &Pose) -> Vec<Pose> {
    let Some(first) = traj.first() else {
        return Vec::new();
    };
    let anchor = *start * first.inverse();
    let mut out: Vec<Pose> = traj.iter().map(|p| anchor * *p).collect();
    out[0] = *start;
    out
}
