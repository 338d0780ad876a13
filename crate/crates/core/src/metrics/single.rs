use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{nearest_distances, nearest_sq_distances_2d, BinaryMask, CameraIntrinsics, Pose, TriangleMesh};

/// Complement over union, `1 - |A ∩ B| / |A ∪ B|`. Two empty masks score the
/// worst value, 1.
pub fn cou(mask_gt: &BinaryMask, mask_pred: &BinaryMask) -> Result<f64> {
    if mask_gt.width() != mask_pred.width() || mask_gt.height() != mask_pred.height() {
        return Err(Error::invalid(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            mask_gt.width(),
            mask_gt.height(),
            mask_pred.width(),
            mask_pred.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in mask_gt.bits().iter().zip(mask_pred.bits()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - inter as f64 / union as f64)
}

fn posed_samples(mesh: &TriangleMesh, pose: &Pose, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    Ok(mesh.sample_surface(n, seed)?.iter().map(|p| pose.transform_point(p)).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric Chamfer distance in meters: the average of the two directional
/// mean nearest-neighbor distances between `n_samples` posed surface samples
/// of each mesh.
pub fn chamfer(
    mesh_gt: &TriangleMesh,
    pose_gt: &Pose,
    mesh_pred: &TriangleMesh,
    pose_pred: &Pose,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let a = posed_samples(mesh_gt, pose_gt, n_samples, seed)?;
    let b = posed_samples(mesh_pred, pose_pred, n_samples, seed)?;
    chamfer_points(&a, &b)
}

pub fn chamfer_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    let ab = mean(&nearest_distances(a, b)?);
    let ba = mean(&nearest_distances(b, a)?);
    Ok(0.5 * (ab + ba))
}

fn projected_samples(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics, n: usize, seed: u64) -> Result<Vec<Vector2<f64>>> {
    let pts: Vec<Vector2<f64>> = posed_samples(mesh, pose, n, seed)?
        .iter()
        .filter(|p| p.z > 0.0)
        .map(|p| Vector2::new(k.f * p.x / p.z + k.cx, k.f * p.y / p.z + k.cy))
        .collect();
    if pts.is_empty() {
        return Err(Error::BehindCamera(pose.translation.z));
    }
    Ok(pts)
}

/// Projected Chamfer distance in squared pixels: the sum of the two
/// directional means of squared 2D nearest-neighbor distances between the
/// projected surface samples. Samples behind the camera are dropped.
pub fn projected_chamfer(
    mesh_gt: &TriangleMesh,
    pose_gt: &Pose,
    mesh_pred: &TriangleMesh,
    pose_pred: &Pose,
    k: &CameraIntrinsics,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let gt = projected_samples(mesh_gt, pose_gt, k, n_samples, seed)?;
    let pred = projected_samples(mesh_pred, pose_pred, k, n_samples, seed)?;
    projected_chamfer_points(&gt, &pred)
}

pub fn projected_chamfer_points(gt: &[Vector2<f64>], pred: &[Vector2<f64>]) -> Result<f64> {
    Ok(mean(&nearest_sq_distances_2d(pred, gt)?) + mean(&nearest_sq_distances_2d(gt, pred)?))
}

/// Mean over thresholds of the fraction of errors strictly below each one.
pub fn average_recall(errors: &[f64], thresholds: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("no errors to evaluate"));
    }
    if thresholds.is_empty() {
        return Err(Error::invalid("no thresholds"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: usize = thresholds.iter().map(|t| sorted.partition_point(|e| e < t)).sum();
    Ok(total as f64 / (errors.len() * thresholds.len()) as f64)
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}
