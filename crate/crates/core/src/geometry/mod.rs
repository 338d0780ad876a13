//! Lie-group math, the pinhole camera, meshes, rotation sampling and spatial search.

pub mod camera;
pub mod kdtree;
pub mod mask;
pub mod mesh;
pub mod pose;
pub mod rotation;
pub mod sampling;

pub use camera::{backproject, project, CameraIntrinsics};
pub use kdtree::{nearest_distances, nearest_sq_distances_2d, KdTree};
pub use mask::{BBox, BinaryMask};
pub use mesh::{sample_triangles, TriangleMesh};
pub use pose::{se3_exp, se3_left_jacobian, se3_left_jacobian_inv, se3_log, Pose, Twist};
pub use rotation::{skew, so3_exp, so3_log, Rotation};
pub use sampling::{mean_sample_spacing, nearest_sample, sample_so3};

/// Area-weighted surface samples in meters, deterministic for a given seed.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> crate::Result<Vec<nalgebra::Vector3<f64>>> {
    mesh.sample_surface(n, seed)
}
