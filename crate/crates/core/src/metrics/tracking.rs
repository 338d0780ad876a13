use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Rotation};

/// Number of inter-frame gaps in the Γ set before deduplication.
pub const GAMMA_COUNT: usize = 10;
/// Discretization of a continuous rotational symmetry.
pub const CONTINUOUS_SYMMETRY_STEPS: usize = 64;

/// Ten gaps linearly spaced from 1 to ⌊N/2⌋, rounded and deduplicated.
pub fn gamma_set(n_frames: usize) -> Result<Vec<usize>> {
    if n_frames < 4 {
        return Err(Error::invalid(format!("need at least 4 frames, got {n_frames}")));
    }
    let hi = (n_frames / 2) as f64;
    let mut out: Vec<usize> = Vec::with_capacity(GAMMA_COUNT);
    for i in 0..GAMMA_COUNT {
        let v = (1.0 + (hi - 1.0) * i as f64 / (GAMMA_COUNT - 1) as f64).round() as usize;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Discrete model-frame symmetries of the ground-truth object. Always holds
/// the identity first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    rotations: Vec<Rotation>,
}

impl Default for SymmetrySet {
    fn default() -> Self {
        SymmetrySet {
            rotations: vec![Rotation::identity()],
        }
    }
}

impl SymmetrySet {
    pub fn identity() -> Self {
        Self::default()
    }

    /// `order`-fold rotational symmetry about `axis`.
    pub fn cyclic(axis: &Vector3<f64>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("symmetry order must be at least 1"));
        }
        if !(axis.norm() > 0.0) || axis.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("symmetry axis must be a non-zero vector"));
        }
        let axis = axis.normalize();
        let rotations = (0..order)
            .map(|i| Rotation::from_axis_angle(&axis, std::f64::consts::TAU * i as f64 / order as f64))
            .collect();
        Ok(SymmetrySet { rotations })
    }

    /// Continuous symmetry about `axis`, discretized.
    pub fn continuous(axis: &Vector3<f64>) -> Result<Self> {
        Self::cyclic(axis, CONTINUOUS_SYMMETRY_STEPS)
    }

    /// Arbitrary set; the identity is prepended when missing.
    pub fn from_rotations(rotations: Vec<Rotation>) -> Self {
        let mut out = vec![Rotation::identity()];
        out.extend(rotations.into_iter().filter(|r| r.angle() > 1e-12));
        SymmetrySet { rotations: out }
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// Per-video settings shared by the three velocity errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEvalConfig {
    pub gamma: Vec<usize>,
    /// Image diagonal of the ground-truth video, pixels.
    pub diag: f64,
    /// Estimated object scale, meters.
    pub scale: f64,
    /// Ground-truth object scale, meters.
    pub scale_gt: f64,
}

impl TrackEvalConfig {
    pub fn new(n_frames: usize, k_gt: &CameraIntrinsics, scale: f64, scale_gt: f64) -> Result<Self> {
        if !(scale > 0.0 && scale_gt > 0.0) {
            return Err(Error::invalid(format!("object scales must be positive, got {scale} and {scale_gt}")));
        }
        Ok(TrackEvalConfig {
            gamma: gamma_set(n_frames)?,
            diag: k_gt.diagonal(),
            scale,
            scale_gt,
        })
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { expected: b, got: a });
    }
    if a < 4 {
        return Err(Error::invalid(format!("need at least 4 frames, got {a}")));
    }
    Ok(())
}

/// Γ-averaged per-frame velocity error. `pair(i, j)` returns `None` for pairs
/// that cannot be scored; such pairs are left out of their gap's mean.
fn gamma_average(n: usize, gamma: &[usize], mut pair: impl FnMut(usize, usize) -> Option<f64>) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for &d in gamma {
        if d >= n {
            continue;
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n - d {
            if let Some(e) = pair(i, i + d) {
                sum += e / d as f64;
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            used += 1;
        }
    }
    (used > 0).then(|| total / used as f64)
}

/// Rotational velocity error in degrees per frame, minimized over the
/// ground-truth symmetries for every frame pair.
pub fn track_rot_error(pred: &[Rotation], gt: &[Rotation], sym: &SymmetrySet, gamma: &[usize]) -> Result<f64> {
    check_lengths(pred.len(), gt.len())?;
    let e = gamma_average(pred.len(), gamma, |i, j| {
        let v = (pred[i] * pred[j].inverse()).log();
        let best = sym
            .rotations()
            .iter()
            .map(|s| (v - (gt[i] * *s * gt[j].inverse()).log()).norm())
            .fold(f64::INFINITY, f64::min);
        Some(best)
    })
    .ok_or_else(|| Error::invalid("no usable frame gap"))?;
    Ok(e.to_degrees())
}

/// Object-origin shift that aligns the predicted and ground-truth projected
/// centers, and the resulting translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginCorrection {
    pub offset: [f64; 3],
    /// True when the raw offset exceeded half the object scale.
    pub clamped: bool,
    #[serde(skip)]
    pub translations: Vec<Vector3<f64>>,
}

/// For every frame, place a point on the ray through the ground-truth center at
/// the predicted object's distance, express it in the predicted object frame
/// and average; the mean is limited to half of `scale`.
pub fn correct_origin(pred: &[Pose], gt_translations: &[Vector3<f64>], scale: f64) -> Result<OriginCorrection> {
    if pred.len() != gt_translations.len() {
        return Err(Error::DimMismatch {
            expected: gt_translations.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("object scale must be positive, got {scale}")));
    }
    let mut o = Vector3::zeros();
    for (i, (p, t_gt)) in pred.iter().zip(gt_translations).enumerate() {
        let n_gt = t_gt.norm();
        if !(n_gt > 0.0) {
            return Err(Error::invalid(format!("frame {i}: zero-norm ground-truth translation")));
        }
        let on_ray = t_gt * (p.translation.norm() / n_gt);
        o += p.inverse().transform_point(&on_ray);
    }
    o /= pred.len() as f64;
    let limit = 0.5 * scale;
    let clamped = o.norm() > limit;
    if clamped {
        o *= limit / o.norm();
    }
    let translations = pred.iter().map(|p| p.translation + p.rotation * o).collect();
    Ok(OriginCorrection {
        offset: [o.x, o.y, o.z],
        clamped,
        translations,
    })
}

/// Projected-velocity error and the number of frames left out because an
/// origin was behind its camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjError {
    pub percent: f64,
    pub skipped_frames: usize,
}

fn project_opt(t: &Vector3<f64>, k: &CameraIntrinsics) -> Option<Vector2<f64>> {
    (t.z > 0.0).then(|| Vector2::new(k.f * t.x / t.z + k.cx, k.f * t.y / t.z + k.cy))
}

/// Velocity error of the projected object origins as a percentage of the
/// ground-truth image diagonal, per frame.
pub fn track_proj_error(
    corrected: &[Vector3<f64>],
    gt_translations: &[Vector3<f64>],
    k: &CameraIntrinsics,
    k_gt: &CameraIntrinsics,
    cfg: &TrackEvalConfig,
) -> Result<ProjError> {
    check_lengths(corrected.len(), gt_translations.len())?;
    let pred: Vec<Option<Vector2<f64>>> = corrected.iter().map(|t| project_opt(t, k)).collect();
    let gt: Vec<Option<Vector2<f64>>> = gt_translations.iter().map(|t| project_opt(t, k_gt)).collect();
    let skipped_frames = pred.iter().zip(&gt).filter(|(a, b)| a.is_none() || b.is_none()).count();
    let norm = 100.0 / cfg.diag;
    let e = gamma_average(corrected.len(), &cfg.gamma, |i, j| {
        let (pi, pj, gi, gj) = (pred[i]?, pred[j]?, gt[i]?, gt[j]?);
        Some(norm * ((pi - pj) - (gi - gj)).norm())
    })
    .ok_or_else(|| Error::invalid("no frame pair with both origins in front of the camera"))?;
    Ok(ProjError {
        percent: e,
        skipped_frames,
    })
}

/// Scale-normalized depth-velocity error per frame, with depth the distance of
/// the (corrected) object origin from the camera.
pub fn track_depth_error(corrected: &[Vector3<f64>], gt_translations: &[Vector3<f64>], cfg: &TrackEvalConfig) -> Result<f64> {
    check_lengths(corrected.len(), gt_translations.len())?;
    if !(cfg.scale > 0.0 && cfg.scale_gt > 0.0) {
        return Err(Error::invalid("object scales must be positive"));
    }
    let d: Vec<f64> = corrected.iter().map(|t| t.norm()).collect();
    let d_gt: Vec<f64> = gt_translations.iter().map(|t| t.norm()).collect();
    gamma_average(d.len(), &cfg.gamma, |i, j| {
        Some(((d[i] - d[j]) / cfg.scale - (d_gt[i] - d_gt[j]) / cfg.scale_gt).abs())
    })
    .ok_or_else(|| Error::invalid("no usable frame gap"))
}
