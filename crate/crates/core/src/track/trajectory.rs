use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::pnp::{solve_pnp_ransac, PnpConfig};
use crate::align::AlignmentResult;
use crate::error::{Error, Result};
use crate::geometry::{project, sample_triangles, CameraIntrinsics, Pose, TriangleMesh};
use crate::io::{read_json, write_canonical};

/// Seed points sampled on the aligned model.
pub const DEFAULT_SEED_POINTS: usize = 256;
/// Minimum seeds that must survive the visibility test.
pub const MIN_SEEDS: usize = 8;
/// Frames whose reprojection RMS exceeds this are declared missing, pixels.
pub const DEFAULT_RMS_GATE: f64 = 8.0;

/// Point-track file: `{n_points, frames: [{idx, pts: [[x, y, vis], ...]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub n_points: usize,
    pub frames: Vec<TrackFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub idx: usize,
    pub pts: Vec<[f64; 3]>,
}

impl TrackFile {
    pub fn read(path: &Path) -> Result<Self> {
        let t: TrackFile = read_json(path)?;
        t.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_canonical(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            if f.pts.len() != self.n_points {
                return Err(Error::invalid(format!(
                    "frame {} has {} points, expected {}",
                    f.idx,
                    f.pts.len(),
                    self.n_points
                )));
            }
        }
        if self.frames.windows(2).any(|w| w[1].idx <= w[0].idx) {
            return Err(Error::invalid("frame indices must be strictly increasing"));
        }
        Ok(())
    }
}

/// 3D model points with their per-frame 2D observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub points3d: Vec<Vector3<f64>>,
    pub frame_indices: Vec<usize>,
    /// `tracks[f][i]` is point i in frame f: pixel position and visibility.
    pub tracks: Vec<Vec<(Vector2<f64>, bool)>>,
}

impl CorrespondenceSet {
    pub fn new(points3d: Vec<Vector3<f64>>, frame_indices: Vec<usize>, tracks: Vec<Vec<(Vector2<f64>, bool)>>) -> Result<Self> {
        if frame_indices.len() != tracks.len() {
            return Err(Error::DimMismatch {
                expected: frame_indices.len(),
                got: tracks.len(),
            });
        }
        if let Some(t) = tracks.iter().find(|t| t.len() != points3d.len()) {
            return Err(Error::DimMismatch {
                expected: points3d.len(),
                got: t.len(),
            });
        }
        if frame_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frame indices must be strictly increasing"));
        }
        Ok(CorrespondenceSet {
            points3d,
            frame_indices,
            tracks,
        })
    }

    pub fn from_track_file(points3d: Vec<Vector3<f64>>, tracks: &TrackFile) -> Result<Self> {
        tracks.validate()?;
        if tracks.n_points != points3d.len() {
            return Err(Error::DimMismatch {
                expected: points3d.len(),
                got: tracks.n_points,
            });
        }
        let frame_indices = tracks.frames.iter().map(|f| f.idx).collect();
        let obs = tracks
            .frames
            .iter()
            .map(|f| f.pts.iter().map(|p| (Vector2::new(p[0], p[1]), p[2] > 0.5)).collect())
            .collect();
        Self::new(points3d, frame_indices, obs)
    }

    pub fn to_track_file(&self) -> TrackFile {
        TrackFile {
            n_points: self.points3d.len(),
            frames: self
                .frame_indices
                .iter()
                .zip(&self.tracks)
                .map(|(&idx, t)| TrackFrame {
                    idx,
                    pts: t.iter().map(|(p, v)| [p.x, p.y, if *v { 1.0 } else { 0.0 }]).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Solved,
    Interpolated,
    /// Not solvable and outside the solved range: holds the nearest solved pose.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub frame: usize,
    pub pose: Pose,
    pub status: FrameStatus,
    /// Reprojection RMS of solved frames, pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseTrajectory {
    pub frames: Vec<TrajectoryFrame>,
}

impl PoseTrajectory {
    pub fn poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.pose).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub pnp: PnpConfig,
    pub rms_gate_px: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            pnp: PnpConfig::default(),
            rms_gate_px: DEFAULT_RMS_GATE,
        }
    }
}

/// Position of the highest-scoring alignment; ties go to the earliest.
pub fn select_init_frame(results: &[AlignmentResult]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|(_, s)| r.score > s) {
            best = Some((i, r.score));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::invalid("no alignment results"))
}

/// Matched model-frame points and their image projections.
pub type Correspondences = (Vec<Vector3<f64>>, Vec<Vector2<f64>>);

/// Samples model-frame surface points on triangles facing the camera and keeps
/// those projecting inside the image. Returns `(points3d, points2d)`.
pub fn seed_correspondences(
    mesh: &TriangleMesh,
    pose: &Pose,
    k: &CameraIntrinsics,
    n: usize,
    seed: u64,
) -> Result<Correspondences> {
    if !(pose.translation.z > 0.0) {
        return Err(Error::BehindCamera(pose.translation.z));
    }
    if n < MIN_SEEDS {
        return Err(Error::invalid(format!("need at least {MIN_SEEDS} seed points, asked for {n}")));
    }
    let facing: Vec<[Vector3<f64>; 3]> = (0..mesh.triangles().len())
        .map(|t| mesh.triangle_m(t))
        .filter(|[a, b, c]| {
            let (ca, cb, cc) = (pose.transform_point(a), pose.transform_point(b), pose.transform_point(c));
            let normal = (cb - ca).cross(&(cc - ca));
            let centroid = (ca + cb + cc) / 3.0;
            normal.dot(&centroid) < 0.0
        })
        .collect();
    if facing.is_empty() {
        return Err(Error::InsufficientSeeds(0));
    }
    let samples = sample_triangles(&facing, n, seed)?;
    let mut p3 = Vec::new();
    let mut p2 = Vec::new();
    for p in samples {
        if let Ok(uv) = project(&pose.transform_point(&p), k) {
            if k.contains(&uv) {
                p3.push(p);
                p2.push(uv);
            }
        }
    }
    if p3.len() < MIN_SEEDS {
        return Err(Error::InsufficientSeeds(p3.len()));
    }
    Ok((p3, p2))
}

/// Mixes the frame index into the RANSAC seed so frames are independent.
pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// PnP for one frame of a correspondence set; `None` when unsolvable or
/// above the RMS gate.
pub fn solve_frame(corr: &CorrespondenceSet, f: usize, k: &CameraIntrinsics, cfg: &TrackConfig) -> Option<(Pose, f64)> {
    let (p3, p2): (Vec<Vector3<f64>>, Vec<Vector2<f64>>) = corr
        .points3d
        .iter()
        .zip(&corr.tracks[f])
        .filter(|(_, (_, vis))| *vis)
        .map(|(p, (uv, _))| (*p, *uv))
        .unzip();
    if p3.len() < 4 {
        return None;
    }
    let pnp = PnpConfig {
        seed: frame_seed(cfg.pnp.seed, corr.frame_indices[f]),
        ..cfg.pnp
    };
    match solve_pnp_ransac(&p3, &p2, k, &pnp) {
        Ok(sol) if sol.rms <= cfg.rms_gate_px => Some((sol.pose, sol.rms)),
        _ => None,
    }
}

/// Fills unsolved frames: geodesic interpolation between the nearest solved
/// neighbors, holding the nearest solved pose beyond either end.
pub fn fill_trajectory(frame_indices: &[usize], solved: &[Option<(Pose, f64)>]) -> Result<PoseTrajectory> {
    let known: Vec<usize> = (0..solved.len()).filter(|&i| solved[i].is_some()).collect();
    if known.is_empty() {
        return Err(Error::NoSolvableFrames);
    }
    let mut frames = Vec::with_capacity(solved.len());
    for i in 0..solved.len() {
        let frame = frame_indices[i];
        if let Some((pose, rms)) = solved[i] {
            frames.push(TrajectoryFrame {
                frame,
                pose,
                status: FrameStatus::Solved,
                rms: Some(rms),
            });
            continue;
        }
        let after = known.partition_point(|&j| j < i);
        let (pose, status) = if after == 0 {
            (solved[known[0]].unwrap().0, FrameStatus::Missing)
        } else if after == known.len() {
            (solved[known[after - 1]].unwrap().0, FrameStatus::Missing)
        } else {
            let (a, b) = (known[after - 1], known[after]);
            let alpha = (frame - frame_indices[a]) as f64 / (frame_indices[b] - frame_indices[a]) as f64;
            let pa = solved[a].unwrap().0;
            (pa.interpolate(&solved[b].unwrap().0, alpha), FrameStatus::Interpolated)
        };
        frames.push(TrajectoryFrame {
            frame,
            pose,
            status,
            rms: None,
        });
    }
    Ok(PoseTrajectory { frames })
}

/// Per-frame PnP over the visible tracks, with gap filling.
pub fn refine_trajectory(corr: &CorrespondenceSet, k: &CameraIntrinsics, cfg: &TrackConfig) -> Result<PoseTrajectory> {
    let solved: Vec<Option<(Pose, f64)>> = (0..corr.tracks.len()).map(|f| solve_frame(corr, f, k, cfg)).collect();
    fill_trajectory(&corr.frame_indices, &solved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn result(score: f64) -> AlignmentResult {
        AlignmentResult {
            object_id: "o".into(),
            pose: Pose::identity(),
            view_index: 0,
            score,
        }
    }

    #[test]
    fn init_frame_selection() {
        assert_eq!(select_init_frame(&[result(0.3), result(0.9), result(0.5)]).unwrap(), 1);
        assert_eq!(select_init_frame(&[result(0.5), result(0.5)]).unwrap(), 0);
        assert!(select_init_frame(&[]).is_err());
    }

    #[test]
    fn sphere_seeds_land_in_its_box() {
        let mesh = TriangleMesh::uv_sphere(0.1, 16, 32).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.05, -0.02, 1.0));
        let (p3, p2) = seed_correspondences(&mesh, &pose, &k(), 256, 3).unwrap();
        assert_eq!(p3.len(), p2.len());
        assert!(p3.len() >= 200);
        let c = project(&pose.translation, &k()).unwrap();
        // projected sphere radius at depth ~1 m is at most f·r/sqrt(d²-r²)
        let radius = 800.0 * 0.1 / (1.0f64 - 0.01).sqrt() + 1e-9;
        for uv in &p2 {
            assert!((uv - c).norm() <= radius * 1.01);
        }
        for p in &p3 {
            // camera-facing hemisphere
            assert!((pose.transform_point(p) - pose.translation).z < 0.02);
        }
        let again = seed_correspondences(&mesh, &pose, &k(), 256, 3).unwrap();
        assert_eq!(again.0, p3);
    }

    #[test]
    fn seeds_behind_camera_fail() {
        let mesh = TriangleMesh::uv_sphere(0.1, 8, 8).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        assert!(seed_correspondences(&mesh, &pose, &k(), 64, 0).is_err());
    }

    fn rotating_scene(n_frames: usize) -> (Vec<Vector3<f64>>, Vec<Pose>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = (0..120)
            .map(|_| Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
            .collect();
        let poses = (0..n_frames)
            .map(|i| {
                Pose::new(
                    Rotation::from_axis_angle(&Vector3::new(0.2, 1.0, 0.1), 0.05 * i as f64),
                    Vector3::new(0.01 * i as f64, 0.0, 1.0),
                )
            })
            .collect();
        (pts, poses)
    }

    fn observe(pts: &[Vector3<f64>], poses: &[Pose], hidden: impl Fn(usize, usize) -> bool) -> CorrespondenceSet {
        let tracks = poses
            .iter()
            .enumerate()
            .map(|(f, p)| {
                pts.iter()
                    .enumerate()
                    .map(|(i, x)| (project(&p.transform_point(x), &k()).unwrap(), !hidden(f, i)))
                    .collect()
            })
            .collect();
        CorrespondenceSet::new(pts.to_vec(), (0..poses.len()).collect(), tracks).unwrap()
    }

    #[test]
    fn static_object_constant_trajectory() {
        let (pts, poses) = rotating_scene(1);
        let poses = vec![poses[0]; 5];
        let traj = refine_trajectory(&observe(&pts, &poses, |_, _| false), &k(), &TrackConfig::default()).unwrap();
        for f in &traj.frames {
            assert_eq!(f.status, FrameStatus::Solved);
            assert!(f.pose.rotation.angle_to(&poses[0].rotation) < 1e-6);
        }
    }

    #[test]
    fn occluded_middle_frame_is_interpolated() {
        let (pts, poses) = rotating_scene(5);
        let corr = observe(&pts, &poses, |f, _| f == 2);
        let traj = refine_trajectory(&corr, &k(), &TrackConfig::default()).unwrap();
        assert_eq!(traj.frames[2].status, FrameStatus::Interpolated);
        let mid = traj.frames[1].pose.interpolate(&traj.frames[3].pose, 0.5);
        assert!(traj.frames[2].pose.rotation.angle_to(&mid.rotation) < 1e-12);
        assert!((traj.frames[2].pose.translation - mid.translation).norm() < 1e-12);
    }

    #[test]
    fn ends_hold_nearest_solved_pose() {
        let (pts, poses) = rotating_scene(4);
        let corr = observe(&pts, &poses, |f, _| f == 0);
        let traj = refine_trajectory(&corr, &k(), &TrackConfig::default()).unwrap();
        assert_eq!(traj.frames[0].status, FrameStatus::Missing);
        assert_eq!(traj.frames[0].pose, traj.frames[1].pose);
        let none = observe(&pts, &poses, |_, _| true);
        assert!(matches!(refine_trajectory(&none, &k(), &TrackConfig::default()), Err(Error::NoSolvableFrames)));
    }

    #[test]
    fn track_file_round_trip() {
        let (pts, poses) = rotating_scene(3);
        let corr = observe(&pts, &poses, |f, i| (f + i) % 3 == 0);
        let file = corr.to_track_file();
        let back = CorrespondenceSet::from_track_file(pts, &file).unwrap();
        assert_eq!(back, corr);
    }
}
