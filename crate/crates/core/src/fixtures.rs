//! Synthetic scenes with known answers: meshes in arbitrary native units,
//! template bundles whose features are exact functions of the rendered view,
//! ground-truth motion, rendered depth and masks, a scale database, and a
//! ray-casting point tracker.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::align::default_intrinsics;
use crate::config::{PipelineConfig, Paths};
use crate::descriptor::{write_bundle, ObjectMeta, PatchGrid, ViewRecord};
use crate::error::{Error, Result};
use crate::geometry::{nearest_sample, sample_so3, BinaryMask, CameraIntrinsics, Pose, Rotation, TriangleMesh};
use crate::io::{
    grid_foreground_from_mask, write_canonical, write_mask, GroundTruth, GtInstance, GtObject, GtVideo, PoseRecord,
    ProposalFile, ProposalRecord, SymmetryJson, Tensor,
};
use crate::metrics::{rasterize_silhouette, render_depth};
use crate::retarget::{camera_pose_looking_at, DEFAULT_CAMERA_ELEVATION_DEG, DEFAULT_LOOK_AT};
use crate::scale::{cloud_scale, ScaleDatabase, ScaleMode};
use crate::track::{TrackFile, TrackFrame};

/// Patch grid side of fixture templates and queries.
pub const FIXTURE_GRID: usize = 30;
/// Patch token width of fixture features.
pub const FIXTURE_DIM: usize = 8;
/// Width of fixture text-image embeddings.
pub const FIXTURE_CLIP_DIM: usize = 16;
/// Virtual camera distance from the arm's look-at point in fixture configs, meters.
pub const FIXTURE_CAMERA_DISTANCE: f64 = 0.85;

/// One object of a synthetic scene.
#[derive(Debug, Clone)]
pub struct FixtureObject {
    pub id: String,
    /// Mesh in native units; its `scale` field converts to meters.
    pub mesh: TriangleMesh,
    pub symmetry: Option<SymmetryJson>,
    /// Frame where the pose coincides with a template rotation.
    pub key_frame: usize,
    pub key_view: usize,
    pub key_translation: Vector3<f64>,
    /// Camera-frame angular velocity, radians per frame.
    pub omega: Vector3<f64>,
    /// Camera-frame velocity, meters per frame.
    pub velocity: Vector3<f64>,
    code: Vec<f32>,
    clip: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct FixtureScene {
    pub k: CameraIntrinsics,
    pub n_frames: usize,
    pub templates: Vec<Rotation>,
    pub objects: Vec<FixtureObject>,
    pub seed: u64,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

fn noisy_unit(rng: &mut ChaCha8Rng, base: &[f32], sigma: f64) -> Vec<f32> {
    let s = sigma * (3.0 / base.len() as f64).sqrt();
    let v: Vec<f64> = base.iter().map(|&b| b as f64 + s * rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

/// Size of a mesh under the relative-scale convention (largest distance from
/// the center along the principal axis), in the mesh's native units.
pub fn native_size(mesh: &TriangleMesh, seed: u64) -> Result<f64> {
    let pts = mesh.with_scale(1.0)?.sample_surface(4000, seed)?;
    cloud_scale(&pts, ScaleMode::MaxProjection)
}

/// Camera-frame axis-aligned extents of a native-unit mesh under `r`.
pub fn view_extents(mesh: &TriangleMesh, r: &Rotation) -> [f64; 3] {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in mesh.vertices() {
        let p = *r * *v;
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let d = hi - lo;
    [d.x, d.y, d.z]
}

impl FixtureScene {
    /// Three objects (a cylinder in millimeters, a box in decimeters, a
    /// sphere in centimeters) moving in front of a 640×480 camera for 60 frames.
    #[allow(clippy::type_complexity)]
    pub fn standard(views: usize, seed: u64) -> Result<Self> {
        let k = default_intrinsics(640, 480)?;
        let templates = sample_so3(views)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs: [(&str, TriangleMesh, Option<SymmetryJson>, usize, Rotation, [f64; 3], [f64; 3], [f64; 3]); 3] = [
            (
                "can",
                TriangleMesh::cylinder(40.0, 50.0, 24)?.with_scale(0.001)?,
                Some(SymmetryJson {
                    axis: [0.0, 0.0, 1.0],
                    order: None,
                }),
                20,
                Rotation::exp(&Vector3::new(-1.0, 0.3, 0.0)),
                [-0.2, 0.02, 0.85],
                [0.0, 0.012, 0.004],
                [0.001, -0.0015, 0.0],
            ),
            (
                "box",
                TriangleMesh::cuboid(Vector3::new(0.6, 0.35, 0.2))?.with_scale(0.1)?,
                Some(SymmetryJson {
                    axis: [0.0, 0.0, 1.0],
                    order: Some(2),
                }),
                35,
                Rotation::exp(&Vector3::new(0.5, -0.6, 0.2)),
                [0.0, -0.03, 0.8],
                [0.008, -0.008, 0.006],
                [0.0, 0.001, 0.003],
            ),
            (
                "ball",
                TriangleMesh::uv_sphere(4.5, 10, 16)?.with_scale(0.01)?,
                None,
                50,
                Rotation::exp(&Vector3::new(0.2, 0.9, -0.4)),
                [0.2, 0.04, 0.9],
                [-0.01, 0.0, 0.008],
                [-0.001, 0.001, -0.002],
            ),
        ];
        let objects = specs
            .into_iter()
            .map(|(id, mesh, symmetry, key_frame, nice, t, w, v)| {
                let (key_view, _) = nearest_sample(&templates, &nice);
                FixtureObject {
                    id: id.to_string(),
                    mesh,
                    symmetry,
                    key_frame,
                    key_view,
                    key_translation: Vector3::from(t),
                    omega: Vector3::from(w),
                    velocity: Vector3::from(v),
                    code: unit_vector(&mut rng, FIXTURE_DIM),
                    clip: unit_vector(&mut rng, FIXTURE_CLIP_DIM),
                }
            })
            .collect();
        Ok(FixtureScene {
            k,
            n_frames: 60,
            templates,
            objects,
            seed,
        })
    }

    pub fn object(&self, id: &str) -> Option<&FixtureObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Ground-truth camera-frame pose of object `o` at `frame`.
    pub fn gt_pose(&self, o: &FixtureObject, frame: usize) -> Pose {
        let dt = frame as f64 - o.key_frame as f64;
        Pose::new(
            Rotation::exp(&(o.omega * dt)) * self.templates[o.key_view],
            o.key_translation + o.velocity * dt,
        )
    }

    pub fn gt_trajectory(&self, o: &FixtureObject) -> Vec<Pose> {
        (0..self.n_frames).map(|f| self.gt_pose(o, f)).collect()
    }

    /// Object size in meters under the relative-scale convention.
    pub fn gt_size(&self, o: &FixtureObject) -> Result<f64> {
        Ok(native_size(&o.mesh, self.seed)? * o.mesh.scale())
    }

    /// Template views: every template rotation rendered at a canonical
    /// distance, cropped like a query, with tokens drawn around the object code.
    pub fn view_records(&self, o: &FixtureObject) -> Result<(ObjectMeta, Vec<ViewRecord>)> {
        let native = o.mesh.with_scale(1.0)?;
        let radius = native.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let dist = 10.0 * radius;
        let canon = CameraIntrinsics::new(60.0 * dist / (2.0 * radius), 48.0, 48.0, 96, 96)?;
        let mut views = Vec::with_capacity(self.templates.len());
        for (j, r) in self.templates.iter().enumerate() {
            let mask = rasterize_silhouette(&native, &Pose::new(*r, Vector3::new(0.0, 0.0, dist)), &canon)?;
            let bbox = mask.bbox().ok_or_else(|| Error::invalid("template silhouette is empty"))?;
            let fg = grid_foreground_from_mask(&mask, &bbox, FIXTURE_GRID, FIXTURE_GRID);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hash_id(&o.id) ^ (j as u64).wrapping_mul(0x9E37_79B9));
            let mut data = Vec::with_capacity(FIXTURE_GRID * FIXTURE_GRID * FIXTURE_DIM);
            for &f in &fg {
                if f {
                    data.extend(noisy_unit(&mut rng, &o.code, 0.6));
                } else {
                    data.extend((0..FIXTURE_DIM).map(|_| 0.3 * rng.gen_range(-1.0f32..1.0)));
                }
            }
            let grid = PatchGrid::new(FIXTURE_GRID, FIXTURE_GRID, FIXTURE_DIM, data, fg)?;
            views.push(ViewRecord {
                rotation: *r,
                grid,
                cls_token: noisy_unit(&mut rng, &o.code, 0.3),
                extents: view_extents(&native, r),
            });
        }
        let meta = ObjectMeta {
            object_id: o.id.clone(),
            mesh: Some("mesh.obj".into()),
            native_size: native_size(&o.mesh, self.seed)?,
            native_size_trusted: false,
        };
        Ok((meta, views))
    }

    /// Depth of the whole scene at `frame`; 0 where nothing is hit.
    pub fn depth(&self, frame: usize) -> Result<crate::scale::DepthMap> {
        let mut out = vec![0.0f64; (self.k.width * self.k.height) as usize];
        for o in &self.objects {
            let d = render_depth(&o.mesh, &self.gt_pose(o, frame), &self.k)?;
            for (a, &b) in out.iter_mut().zip(d.values()) {
                if b > 0.0 && (*a == 0.0 || b < *a) {
                    *a = b;
                }
            }
        }
        crate::scale::DepthMap::new(self.k.width, self.k.height, out)
    }

    pub fn mask(&self, o: &FixtureObject, frame: usize) -> Result<BinaryMask> {
        rasterize_silhouette(&o.mesh, &self.gt_pose(o, frame), &self.k)
    }

    /// Scale database: five near-duplicate descriptions per object around its
    /// true size, plus distractors.
    pub fn scale_database(&self) -> Result<ScaleDatabase> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5CA1E);
        let mut texts = Vec::new();
        let mut scales = Vec::new();
        let mut emb = Vec::new();
        for o in &self.objects {
            let size = self.gt_size(o)?;
            for i in 0..5 {
                texts.push(format!("a {} ({})", o.id, i + 1));
                scales.push(size * (1.0 + rng.gen_range(-0.03..0.03)));
                emb.extend(noisy_unit(&mut rng, &o.clip, 0.1));
            }
        }
        for i in 0..45 {
            texts.push(format!("distractor object {i}"));
            scales.push((rng.gen_range(0.02f64.ln()..1.5f64.ln())).exp());
            emb.extend(unit_vector(&mut rng, FIXTURE_CLIP_DIM));
        }
        ScaleDatabase::new(texts, scales, FIXTURE_CLIP_DIM, emb)
    }

    /// Writes the scene, its config, proposals and ground truth under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        for sub in ["bundles", "scale_db", "proposals", "depth"] {
            mk(&dir.join(sub))?;
        }
        let mut objects = BTreeMap::new();
        let mut proposals = Vec::new();
        let mut instances = Vec::new();
        let mut videos = Vec::new();
        for o in &self.objects {
            let bdir = dir.join("bundles").join(&o.id);
            let (meta, views) = self.view_records(o)?;
            write_bundle(&bdir, &meta, &views)?;
            let obj = bdir.join("mesh.obj");
            std::fs::write(&obj, o.mesh.to_obj_string()).map_err(|e| Error::io(&obj, e))?;
            objects.insert(
                o.id.clone(),
                GtObject {
                    mesh: format!("bundles/{}/mesh.obj", o.id),
                    mesh_scale: o.mesh.scale(),
                    size: self.gt_size(o)?,
                    symmetry: o.symmetry,
                },
            );

            let f = o.key_frame;
            let pdir = dir.join("proposals");
            let mask = self.mask(o, f)?;
            let bbox = mask.bbox().ok_or_else(|| Error::invalid(format!("{} is not visible at frame {f}", o.id)))?;
            write_mask(&pdir.join(format!("{}_mask.tnsr", o.id)), &mask)?;
            let key = &views[o.key_view];
            Tensor::new(vec![FIXTURE_GRID, FIXTURE_GRID, FIXTURE_DIM], key.grid.data().to_vec())?
                .write(&pdir.join(format!("{}_grid.tnsr", o.id)))?;
            let fg = key.grid.foreground().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            Tensor::new(vec![FIXTURE_GRID, FIXTURE_GRID], fg)?.write(&pdir.join(format!("{}_fg.tnsr", o.id)))?;
            Tensor::new(vec![FIXTURE_DIM], key.cls_token.clone())?.write(&pdir.join(format!("{}_cls.tnsr", o.id)))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hash_id(&o.id) ^ 0xC11F);
            Tensor::new(vec![FIXTURE_CLIP_DIM], noisy_unit(&mut rng, &o.clip, 0.05))?
                .write(&pdir.join(format!("{}_clip.tnsr", o.id)))?;
            let depth_name = format!("depth/frame_{f:04}.tnsr");
            self.depth(f)?.to_tensor().write(&dir.join(&depth_name))?;
            proposals.push(ProposalRecord {
                id: format!("{}@{f}", o.id),
                frame: f,
                bbox: [bbox.cx, bbox.cy, bbox.w, bbox.h],
                grid: format!("proposals/{}_grid.tnsr", o.id),
                fg: Some(format!("proposals/{}_fg.tnsr", o.id)),
                mask: Some(format!("proposals/{}_mask.tnsr", o.id)),
                depth: Some(depth_name),
                clip: Some(format!("proposals/{}_clip.tnsr", o.id)),
                cls: Some(format!("proposals/{}_cls.tnsr", o.id)),
            });
            instances.push(GtInstance {
                proposal: format!("{}@{f}", o.id),
                object_id: o.id.clone(),
                frame: f,
                pose: self.gt_pose(o, f),
            });
            videos.push(GtVideo {
                object_id: o.id.clone(),
                poses: self.gt_trajectory(o).iter().enumerate().map(|(i, p)| PoseRecord::new(i, p)).collect(),
            });
        }
        self.scale_database()?
            .save(&dir.join("scale_db/entries.jsonl"), &dir.join("scale_db/embeddings.tnsr"))?;
        write_canonical(
            &dir.join("proposals.json"),
            &ProposalFile {
                image_size: [self.k.width, self.k.height],
                intrinsics: Some(self.k),
                proposals,
            },
        )?;
        write_canonical(
            &dir.join("gt.json"),
            &GroundTruth {
                intrinsics: self.k,
                objects,
                instances,
                videos,
            },
        )?;
        let mut config = PipelineConfig {
            seed: self.seed,
            paths: Paths {
                bundles: Some("bundles".into()),
                index: Some("index.p6dx".into()),
                scale_db: Some("scale_db/entries.jsonl".into()),
                scale_db_embeddings: Some("scale_db/embeddings.tnsr".into()),
            },
            views: self.templates.len(),
            ..PipelineConfig::default()
        };
        // the scene sits ~0.85 m from its camera; pull the virtual camera in
        // so the objects land within reach of the arm
        config.retarget.t_rc =
            Some(camera_pose_looking_at(Vector3::from(DEFAULT_LOOK_AT), FIXTURE_CAMERA_DISTANCE, DEFAULT_CAMERA_ELEVATION_DEG).into());
        write_canonical(&dir.join("config.json"), &config)?;
        write_canonical(
            &dir.join("scene.json"),
            &json!({"frames": self.n_frames, "views": self.templates.len(), "seed": self.seed,
                    "objects": self.objects.iter().map(|o| json!({"id": o.id, "key_frame": o.key_frame, "key_view": o.key_view})).collect::<Vec<_>>()}),
        )
    }
}

fn hash_id(id: &str) -> u64 {
    // FNV-1a: stable across platforms and releases.
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// First intersection of the ray `origin + s·dir` (s > 0) with the posed mesh.
/// Returns the ray parameter and the triangle index.
pub fn ray_cast(mesh: &TriangleMesh, pose: &Pose, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle_m(t).map(|p| pose.transform_point(&p));
        let (e1, e2) = (b - a, c - a);
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-15 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let dist = e2.dot(&q) * inv;
        if dist > 1e-12 && best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, t));
        }
    }
    best
}

/// Point tracks of a convex ground-truth object. Every seed pixel of
/// `init_frame` is ray-cast onto the object, the hit point follows the
/// ground-truth motion, and it is visible while its face points at the camera
/// and it projects inside the image. `occlusion` hides that fraction of the
/// points in every frame but the first; `noise_px` adds uniform jitter with
/// that standard deviation.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_tracks(
    mesh: &TriangleMesh,
    gt: &[Pose],
    init_frame: usize,
    seeds: &[Vector2<f64>],
    k: &CameraIntrinsics,
    occlusion: f64,
    noise_px: f64,
    seed: u64,
) -> Result<TrackFile> {
    let init = gt
        .get(init_frame)
        .ok_or_else(|| Error::invalid(format!("init frame {init_frame} outside {} frames", gt.len())))?;
    let hits: Vec<Option<(Vector3<f64>, Vector3<f64>)>> = seeds
        .iter()
        .map(|p| {
            let dir = Vector3::new((p.x - k.cx) / k.f, (p.y - k.cy) / k.f, 1.0);
            ray_cast(mesh, init, &Vector3::zeros(), &dir).map(|(s, t)| {
                let x = init.inverse().transform_point(&(dir * s));
                let [a, b, c] = mesh.triangle_m(t);
                (x, (b - a).cross(&(c - a)))
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = noise_px * 3f64.sqrt();
    let frames = gt
        .iter()
        .enumerate()
        .map(|(f, pose)| {
            let pts = hits
                .iter()
                .zip(seeds)
                .map(|(hit, s)| {
                    let Some((x, n)) = hit else {
                        return [s.x, s.y, 0.0];
                    };
                    let c = pose.transform_point(x);
                    let facing = (pose.rotation * *n).dot(&c) < 0.0;
                    let hidden = f != init_frame && occlusion > 0.0 && rng.gen::<f64>() < occlusion;
                    if c.z <= 0.0 {
                        return [s.x, s.y, 0.0];
                    }
                    let mut uv = Vector2::new(k.f * c.x / c.z + k.cx, k.f * c.y / c.z + k.cy);
                    if noise_px > 0.0 {
                        uv += Vector2::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
                    }
                    let vis = facing && !hidden && k.contains(&uv);
                    [uv.x, uv.y, if vis { 1.0 } else { 0.0 }]
                })
                .collect();
            TrackFrame { idx: f, pts }
        })
        .collect();
    let out = TrackFile {
        n_points: seeds.len(),
        frames,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{estimate_rotation, estimate_translation};
    use crate::descriptor::ObjectEntry;
    use crate::geometry::project;

    fn small_scene() -> FixtureScene {
        FixtureScene::standard(60, 7).unwrap()
    }

    #[test]
    fn key_pose_is_a_template() {
        let s = small_scene();
        for o in &s.objects {
            let p = s.gt_pose(o, o.key_frame);
            assert_eq!(p.rotation, s.templates[o.key_view]);
            assert!(s.mask(o, o.key_frame).unwrap().count() > 500);
        }
    }

    #[test]
    fn objects_stay_in_view() {
        let s = small_scene();
        for o in &s.objects {
            for p in s.gt_trajectory(o) {
                let uv = project(&p.translation, &s.k).unwrap();
                assert!(s.k.contains(&uv), "{} leaves the image", o.id);
            }
        }
    }

    #[test]
    fn native_sizes_follow_the_convention() {
        let s = small_scene();
        let can = s.object("can").unwrap();
        // Cylinder of half-height 50 mm and radius 40 mm: the principal axis is
        // close to z, and a slight tilt from sampling only picks up rim points.
        let n = native_size(&can.mesh, 1).unwrap();
        assert!((50.0..54.0).contains(&n), "{n}");
        let g = s.gt_size(can).unwrap();
        assert!((0.050..0.054).contains(&g), "{g}");
    }

    #[test]
    fn template_self_match_and_translation() {
        let s = small_scene();
        let o = s.object("box").unwrap();
        let (meta, views) = s.view_records(o).unwrap();
        let entry = ObjectEntry::new(meta, views, Some(60)).unwrap();
        let query = entry.views[o.key_view].grid.clone();
        let (r, j, score) = estimate_rotation(&query, &entry).unwrap();
        assert_eq!(j, o.key_view);
        assert!((score - 1.0).abs() < 1e-6);
        assert_eq!(r, s.templates[o.key_view]);
        // Eq. 2 with the true extents lands near the true translation.
        let mask = s.mask(o, o.key_frame).unwrap();
        let ext = view_extents(&o.mesh.with_scale(1.0).unwrap(), &r).map(|e| e * o.mesh.scale());
        let t = estimate_translation(&mask.bbox().unwrap(), ext, &s.k).unwrap();
        let gt = s.gt_pose(o, o.key_frame).translation;
        assert!((t - gt).norm() / gt.norm() < 0.05, "{t} vs {gt}");
    }

    #[test]
    fn ray_cast_hits_front_face() {
        let mesh = TriangleMesh::cuboid(Vector3::new(0.1, 0.1, 0.1)).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let (d, _) = ray_cast(&mesh, &pose, &Vector3::zeros(), &Vector3::z()).unwrap();
        assert!((d - 0.9).abs() < 1e-12);
        assert!(ray_cast(&mesh, &pose, &Vector3::zeros(), &Vector3::x()).is_none());
    }

    #[test]
    fn tracks_reproject_ground_truth() {
        let s = small_scene();
        let o = s.object("can").unwrap();
        let gt = s.gt_trajectory(o);
        let (p3, p2) = crate::track::seed_correspondences(&o.mesh, &gt[o.key_frame], &s.k, 64, 3).unwrap();
        let tracks = synthetic_tracks(&o.mesh, &gt, o.key_frame, &p2, &s.k, 0.0, 0.0, 1).unwrap();
        assert_eq!(tracks.frames.len(), s.n_frames);
        let init = &tracks.frames[o.key_frame];
        for (i, pt) in init.pts.iter().enumerate() {
            assert_eq!(pt[2], 1.0);
            assert!((pt[0] - p2[i].x).abs() < 1e-6 && (pt[1] - p2[i].y).abs() < 1e-6);
        }
        // Visible points are projections of the seeded model points.
        for f in [0, 30, 59] {
            for (i, pt) in tracks.frames[f].pts.iter().enumerate() {
                if pt[2] == 1.0 {
                    let uv = project(&gt[f].transform_point(&p3[i]), &s.k).unwrap();
                    assert!((uv - Vector2::new(pt[0], pt[1])).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn occlusion_hides_the_requested_fraction() {
        let s = small_scene();
        let o = s.object("box").unwrap();
        let gt = s.gt_trajectory(o);
        let (_, p2) = crate::track::seed_correspondences(&o.mesh, &gt[o.key_frame], &s.k, 200, 3).unwrap();
        let open = synthetic_tracks(&o.mesh, &gt, o.key_frame, &p2, &s.k, 0.0, 0.0, 1).unwrap();
        let occl = synthetic_tracks(&o.mesh, &gt, o.key_frame, &p2, &s.k, 0.3, 0.0, 1).unwrap();
        let count = |t: &TrackFile| t.frames.iter().flat_map(|f| &f.pts).filter(|p| p[2] == 1.0).count() as f64;
        let ratio = count(&occl) / count(&open);
        assert!((ratio - 0.7).abs() < 0.05, "{ratio}");
    }
}
