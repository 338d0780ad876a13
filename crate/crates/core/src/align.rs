//! Single-frame pose: rotation by patch-token template matching, translation by
//! bounding-box rescaling of the matched view's extents.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::descriptor::{ObjectEntry, PatchGrid};
use crate::error::{Error, Result};
use crate::geometry::{BBox, BinaryMask, CameraIntrinsics, Pose, Rotation};

/// Fractional padding added around the mask box before cropping.
pub const CROP_PADDING: f64 = 0.1;
/// Side of the square crop fed to the feature extractor, pixels.
pub const CROP_SIZE: u32 = 420;
/// Patch grid side for a 420 px crop with 14 px patches.
pub const GRID_SIDE: usize = 30;

#[derive(Debug, Clone)]
pub struct Proposal {
    pub bbox: BBox,
    pub mask: Option<BinaryMask>,
    pub query_grid: PatchGrid,
    pub clip_embedding: Option<Vec<f32>>,
    pub frame_index: usize,
}

impl Proposal {
    /// Checks the box against the mask when one is attached.
    pub fn validate(&self) -> Result<()> {
        if let Some(mask) = &self.mask {
            let mb = mask.bbox().ok_or_else(|| Error::invalid("proposal mask is empty"))?;
            if !self.bbox.encloses(&mb, 1e-6) {
                return Err(Error::invalid("proposal box does not enclose its mask"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub object_id: String,
    pub pose: Pose,
    pub view_index: usize,
    pub score: f64,
}

/// Square crop window around a box: side = max(w, h)·(1 + padding), same center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
    pub output_size: u32,
    pub padding: f64,
}

impl CropWindow {
    /// Maps an image pixel into crop pixels.
    pub fn to_crop(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.output_size as f64 / self.side;
        ((x - self.cx) * s + 0.5 * self.output_size as f64, (y - self.cy) * s + 0.5 * self.output_size as f64)
    }
}

pub fn square_crop(bbox: &BBox, padding: f64, output_size: u32) -> CropWindow {
    CropWindow {
        cx: bbox.cx,
        cy: bbox.cy,
        side: bbox.w.max(bbox.h) * (1.0 + padding),
        output_size,
        padding,
    }
}

/// Per-patch unit tokens of the query, zero outside the foreground.
fn normalized_query(query: &PatchGrid) -> Result<(Vec<f64>, usize)> {
    let dim = query.dim();
    let mut out = vec![0.0f64; query.patch_count() * dim];
    let mut n_fg = 0usize;
    for k in 0..query.patch_count() {
        if !query.is_foreground(k) {
            continue;
        }
        n_fg += 1;
        let t = query.token(k);
        let n = t.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if n > 0.0 {
            for (o, &v) in out[k * dim..(k + 1) * dim].iter_mut().zip(t) {
                *o = v as f64 / n;
            }
        }
    }
    if n_fg == 0 {
        return Err(Error::EmptyForeground);
    }
    Ok((out, n_fg))
}

/// Best-matching view of `entry` for a query grid.
///
/// The score of view j is the mean, over foreground query patches, of the dot
/// product between the unit query token and the unit template token at the
/// same grid position (template background counts as zero). Returns
/// `(rotation, view_index, score)`; ties go to the lowest view index.
pub fn estimate_rotation(query: &PatchGrid, entry: &ObjectEntry) -> Result<(Rotation, usize, f64)> {
    let first = entry.views.first().ok_or_else(|| Error::invalid("object has no views"))?;
    if !query.same_layout(&first.grid) {
        return Err(Error::DimMismatch {
            expected: first.grid.data().len(),
            got: query.data().len(),
        });
    }
    let (q, n_fg) = normalized_query(query)?;
    let dim = query.dim();
    let active: Vec<usize> = (0..query.patch_count()).filter(|&k| query.is_foreground(k)).collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (j, view) in entry.views.iter().enumerate() {
        let inv = entry.template_inv_norms(j);
        let mut sum = 0.0;
        for &k in &active {
            if inv[k] == 0.0 {
                continue;
            }
            let t = view.grid.token(k);
            let qk = &q[k * dim..(k + 1) * dim];
            let d: f64 = qk.iter().zip(t).map(|(a, &b)| a * b as f64).sum();
            sum += d * inv[k];
        }
        let score = sum / n_fg as f64;
        if score > best.0 {
            best = (score, j);
        }
    }
    Ok((entry.views[best.1].rotation, best.1, best.0))
}

/// Translation from the bounding box and the object's camera-frame extents:
/// t_z = (f·o_w/b_w + f·o_h/b_h)/2, and (t_x, t_y) back-project the box center.
pub fn estimate_translation(bbox: &BBox, extents: [f64; 3], k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(Error::invalid("bounding box has zero size"));
    }
    if !(extents[0] > 0.0 && extents[1] > 0.0) {
        return Err(Error::invalid("object extents must be positive"));
    }
    let tz = 0.5 * (k.f * extents[0] / bbox.w + k.f * extents[1] / bbox.h);
    Ok(Vector3::new((bbox.cx - k.cx) * tz / k.f, (bbox.cy - k.cy) * tz / k.f, tz))
}

/// Focal-length prior for unknown intrinsics: f = image diagonal, centered
/// principal point.
pub fn default_intrinsics(width: u32, height: u32) -> Result<CameraIntrinsics> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("image size {width}x{height}")));
    }
    let (w, h) = (width as f64, height as f64);
    CameraIntrinsics::new((w * w + h * h).sqrt(), 0.5 * w, 0.5 * h, width, height)
}

/// Full single-frame alignment of one proposal against one object.
///
/// `scale` is the object's metric size measured like its `native_size`, so the
/// winning view's extents are multiplied by `scale / native_size`.
pub fn estimate_pose(proposal: &Proposal, entry: &ObjectEntry, k: &CameraIntrinsics, scale: f64) -> Result<AlignmentResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("object scale must be positive, got {scale}")));
    }
    let (rotation, view_index, score) = estimate_rotation(&proposal.query_grid, entry)?;
    let factor = scale / entry.native_size;
    let e = entry.views[view_index].extents;
    let t = estimate_translation(&proposal.bbox, [e[0] * factor, e[1] * factor, e[2] * factor], k)?;
    Ok(AlignmentResult {
        object_id: entry.object_id.clone(),
        pose: Pose::new(rotation, t),
        view_index,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{ObjectMeta, ViewRecord};
    use crate::geometry::project;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize, dim: usize) -> PatchGrid {
        let data = (0..rows * cols * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let mut fg: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(0.7)).collect();
        fg[0] = true;
        PatchGrid::new(rows, cols, dim, data, fg).unwrap()
    }

    fn entry(rng: &mut impl Rng, m: usize) -> ObjectEntry {
        let views = (0..m)
            .map(|j| ViewRecord {
                rotation: Rotation::from_axis_angle(&Vector3::z(), j as f64 * 0.01),
                grid: random_grid(rng, 4, 5, 6),
                cls_token: vec![1.0; 6],
                extents: [0.1, 0.2, 0.15],
            })
            .collect();
        let meta = ObjectMeta {
            object_id: "obj".into(),
            mesh: None,
            native_size: 0.1,
            native_size_trusted: true,
        };
        ObjectEntry::new(meta, views, Some(m)).unwrap()
    }

    fn naive(query: &PatchGrid, e: &ObjectEntry) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        let n_fg = query.foreground_count() as f64;
        for (j, v) in e.views.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..query.patch_count() {
                if !query.is_foreground(k) || !v.grid.is_foreground(k) {
                    continue;
                }
                let a: Vec<f64> = query.token(k).iter().map(|&x| x as f64).collect();
                let b: Vec<f64> = v.grid.token(k).iter().map(|&x| x as f64).collect();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                s += a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            }
            if s / n_fg > best.1 {
                best = (j, s / n_fg);
            }
        }
        best
    }

    #[test]
    fn self_match_scores_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = entry(&mut rng, 40);
        let (_, j, s) = estimate_rotation(&e.views[17].grid, &e).unwrap();
        assert_eq!(j, 17);
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_query_ties_to_view_zero() {
        let views: Vec<ViewRecord> = (0..5)
            .map(|j| ViewRecord {
                rotation: Rotation::from_axis_angle(&Vector3::x(), j as f64),
                grid: PatchGrid::dense(1, 2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(),
                cls_token: vec![1.0, 0.0, 0.0],
                extents: [1.0; 3],
            })
            .collect();
        let meta = ObjectMeta {
            object_id: "o".into(),
            native_size: 1.0,
            ..Default::default()
        };
        let e = ObjectEntry::new(meta, views, None).unwrap();
        let q = PatchGrid::dense(1, 2, 3, vec![0.0, 0.0, 2.0, 0.0, 0.0, -1.0]).unwrap();
        let (_, j, s) = estimate_rotation(&q, &e).unwrap();
        assert_eq!(j, 0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = entry(&mut rng, 600);
        for _ in 0..5 {
            let q = random_grid(&mut rng, 4, 5, 6);
            let (_, j, s) = estimate_rotation(&q, &e).unwrap();
            let (nj, ns) = naive(&q, &e);
            assert_eq!(j, nj);
            assert!((s - ns).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_invariant_to_token_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = entry(&mut rng, 100);
        let q = random_grid(&mut rng, 4, 5, 6);
        let scaled = PatchGrid::new(4, 5, 6, q.data().iter().map(|v| v * 8.0).collect(), q.foreground().to_vec()).unwrap();
        assert_eq!(estimate_rotation(&q, &e).unwrap().1, estimate_rotation(&scaled, &e).unwrap().1);
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = entry(&mut rng, 3);
        let q = random_grid(&mut rng, 4, 5, 7);
        assert!(matches!(estimate_rotation(&q, &e), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn translation_hand_example() {
        let k = CameraIntrinsics::new(600.0, 320.0, 240.0, 640, 480).unwrap();
        let b = BBox::new(320.0, 240.0, 100.0, 200.0).unwrap();
        let t = estimate_translation(&b, [0.1, 0.2, 0.1], &k).unwrap();
        assert!((t - Vector3::new(0.0, 0.0, 0.6)).norm() < 1e-12);
        let b2 = BBox::new(320.0, 240.0, 200.0, 400.0).unwrap();
        assert!((estimate_translation(&b2, [0.1, 0.2, 0.1], &k).unwrap().z - 0.3).abs() < 1e-12);
        let b3 = BBox::new(320.0 + 600.0, 240.0, 100.0, 200.0).unwrap();
        let t3 = estimate_translation(&b3, [0.1, 0.2, 0.1], &k).unwrap();
        assert!((t3.x - t3.z).abs() < 1e-12);
    }

    #[test]
    fn translation_projects_to_box_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = CameraIntrinsics::new(rng.gen_range(200.0..2000.0), 320.0, 240.0, 640, 480).unwrap();
            let b = BBox::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0), rng.gen_range(5.0..300.0), rng.gen_range(5.0..300.0)).unwrap();
            let t = estimate_translation(&b, [rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0), 0.1], &k).unwrap();
            let p = project(&t, &k).unwrap();
            assert!((p.x - b.cx).abs() < 1e-9 && (p.y - b.cy).abs() < 1e-9);
        }
    }

    #[test]
    fn default_intrinsics_cases() {
        assert_eq!(default_intrinsics(640, 480).unwrap().f, 800.0);
        assert!(default_intrinsics(1000, 0).is_err());
        assert!((default_intrinsics(1920, 1080).unwrap().f - 2202.9071).abs() < 1e-3);
        // 4:3 diagonal field of view close to 53 degrees
        let k = default_intrinsics(640, 480).unwrap();
        let fov = 2.0 * (0.5 * k.diagonal() / k.f).atan();
        assert!((fov.to_degrees() - 53.13).abs() < 0.01);
    }

    #[test]
    fn identity_template_centered_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e = entry(&mut rng, 1);
        let k = CameraIntrinsics::new(500.0, 320.0, 240.0, 640, 480).unwrap();
        let p = Proposal {
            bbox: BBox::new(320.0, 240.0, 80.0, 60.0).unwrap(),
            mask: None,
            query_grid: e.views[0].grid.clone(),
            clip_embedding: None,
            frame_index: 0,
        };
        let r = estimate_pose(&p, &e, &k, 0.2).unwrap();
        assert_eq!(r.pose.translation.x, 0.0);
        assert_eq!(r.pose.translation.y, 0.0);
        // extents doubled by scale / native size
        let expect = 0.5 * (500.0 * 0.2 / 80.0 + 500.0 * 0.4 / 60.0);
        assert!((r.pose.translation.z - expect).abs() < 1e-12);
    }

    #[test]
    fn crop_is_square_and_padded() {
        let c = square_crop(&BBox::new(100.0, 50.0, 40.0, 20.0).unwrap(), CROP_PADDING, CROP_SIZE);
        assert!((c.side - 44.0).abs() < 1e-12);
        let (x, y) = c.to_crop(100.0, 50.0);
        assert_eq!((x, y), (210.0, 210.0));
    }
}
