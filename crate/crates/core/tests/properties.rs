//! Cross-module properties, checked on generated inputs.

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use p6d_core::align::{estimate_rotation, estimate_translation};
use p6d_core::descriptor::{ffa_aggregate, DescriptorIndex, ObjectEntry, ObjectMeta, PatchGrid, ViewRecord};
use p6d_core::geometry::{nearest_distances, nearest_sample, sample_so3, BinaryMask, BBox, CameraIntrinsics, Pose, Rotation, TriangleMesh};
use p6d_core::metrics::{render_depth, average_recall, chamfer, cou, rasterize_silhouette, track_rot_error, gamma_set, SymmetrySet};
use p6d_core::retarget::{forward_kinematics, optimize_trajectory, KinematicChain, RetargetProblem, PANDA_READY};
use p6d_core::scale::{cloud_scale, fuse_scales, relative_scale, ScaleMode};
use p6d_core::track::{refine_trajectory, solve_pnp, CorrespondenceSet, TrackConfig};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate quaternion", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.05)
        .prop_map(|(w, x, y, z)| Rotation::from_wxyz_normalized(w, x, y, z).unwrap())
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotation(), vec3(2.0)).prop_map(|(r, t)| Pose::new(r, t))
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(600.0, 160.0, 120.0, 320, 240).unwrap()
}

fn close(a: &Pose, b: &Pose) -> f64 {
    (a.matrix() - b.matrix()).abs().max()
}

fn grid(rows: usize, cols: usize, dim: usize, data: Vec<f32>, fg: Vec<bool>) -> PatchGrid {
    PatchGrid::new(rows, cols, dim, data, fg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pose_group_laws(a in pose(), b in pose(), c in pose()) {
        prop_assert!(close(&((a * b) * c), &(a * (b * c))) < 1e-9);
        prop_assert!(close(&(a * a.inverse()), &Pose::identity()) < 1e-9);
    }

    #[test]
    fn so3_and_se3_log_invert_exp(w in vec3(1.8), v in vec3(1.0)) {
        prop_assume!(w.norm() < 3.1);
        prop_assert!((Rotation::exp(&w).log() - w).norm() < 1e-9);
        let p = Pose::new(Rotation::exp(&w), v);
        prop_assert!(close(&Pose::exp(&p.log()), &p) < 1e-9);
    }

    #[test]
    fn kdtree_matches_brute_force(
        a in prop::collection::vec(vec3(1.0), 1..200),
        b in prop::collection::vec(vec3(1.0), 1..200),
    ) {
        let d = nearest_distances(&a, &b).unwrap();
        for (p, got) in a.iter().zip(d) {
            let want = b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn retrieval_ignores_query_magnitude(
        rows in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 2..40),
        q in prop::collection::vec(-1.0f32..1.0, 8),
        s in 0.01f32..100.0,
    ) {
        prop_assume!(q.iter().any(|v| v.abs() > 1e-3));
        prop_assume!(rows.iter().all(|r| r.iter().any(|v| v.abs() > 1e-3)));
        let items: Vec<(String, Vec<f32>)> = rows.into_iter().enumerate().map(|(i, r)| (format!("o{i:03}"), r)).collect();
        let index = DescriptorIndex::from_descriptors(8, items).unwrap();
        let a = index.retrieve(&q, index.len()).unwrap();
        let scaled: Vec<f32> = q.iter().map(|v| v * s).collect();
        let b = index.retrieve(&scaled, index.len()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.score - y.score).abs() < 1e-5);
        }
        // full ranking is a total order by score, ties by id
        for w in a.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].object_id < w[1].object_id));
        }
    }

    #[test]
    fn ffa_ignores_view_and_patch_order(
        data in prop::collection::vec(-1.0f32..1.0, 3 * 9 * 4),
        shift in 1usize..3,
        rot in 1usize..9,
    ) {
        let fg = vec![true, true, false, true, false, true, true, true, false];
        let views: Vec<PatchGrid> = data.chunks(9 * 4).map(|d| grid(3, 3, 4, d.to_vec(), fg.clone())).collect();
        let base = ffa_aggregate(&views).unwrap();
        let mut reordered = views.clone();
        reordered.rotate_left(shift);
        // permute foreground patches of the first view among themselves
        let fg_idx: Vec<usize> = (0..9).filter(|&k| fg[k]).collect();
        let src = views[0].data();
        let mut permuted = src.to_vec();
        for (i, &k) in fg_idx.iter().enumerate() {
            let from = fg_idx[(i + rot) % fg_idx.len()];
            permuted[k * 4..(k + 1) * 4].copy_from_slice(&src[from * 4..(from + 1) * 4]);
        }
        let pos = reordered.iter().position(|g| g.data() == src).unwrap();
        reordered[pos] = grid(3, 3, 4, permuted, fg.clone());
        let other = ffa_aggregate(&reordered).unwrap();
        for (x, y) in base.iter().zip(&other) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rotation_argmax_ignores_common_token_scale(
        tokens in prop::collection::vec(-1.0f32..1.0, 12 * 16 * 4),
        query in prop::collection::vec(-1.0f32..1.0, 16 * 4),
        s in 0.01f32..100.0,
    ) {
        let rots = sample_so3(12).unwrap();
        let fg: Vec<bool> = (0..16).map(|k| k % 3 != 0).collect();
        let views = rots
            .iter()
            .zip(tokens.chunks(16 * 4))
            .map(|(r, d)| ViewRecord { rotation: *r, grid: grid(4, 4, 4, d.to_vec(), fg.clone()), cls_token: vec![1.0; 4], extents: [1.0; 3] })
            .collect();
        let meta = ObjectMeta { object_id: "x".into(), mesh: None, native_size: 1.0, native_size_trusted: true };
        let entry = ObjectEntry::new(meta, views, None).unwrap();
        let q = grid(4, 4, 4, query.clone(), vec![true; 16]);
        let qs = grid(4, 4, 4, query.iter().map(|v| v * s).collect(), vec![true; 16]);
        let (_, a, sa) = estimate_rotation(&q, &entry).unwrap();
        let (_, b, sb) = estimate_rotation(&qs, &entry).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((sa - sb).abs() < 1e-6);
    }

    #[test]
    fn translation_projects_to_box_center(
        cx in 0.0..320.0f64, cy in 0.0..240.0f64, w in 4.0..300.0f64, h in 4.0..300.0f64,
        ex in 0.01..1.0f64, ey in 0.01..1.0f64, ez in 0.01..1.0f64,
    ) {
        let k = camera();
        let t = estimate_translation(&BBox::new(cx, cy, w, h).unwrap(), [ex, ey, ez], &k).unwrap();
        prop_assert!((k.f * t.x / t.z + k.cx - cx).abs() < 1e-9);
        prop_assert!((k.f * t.y / t.z + k.cy - cy).abs() < 1e-9);
        let swapped = estimate_translation(&BBox::new(cx, cy, h, w).unwrap(), [ey, ex, ez], &k).unwrap();
        prop_assert_eq!(t.z, swapped.z);
    }

    #[test]
    fn scale_fusion_preserves_ratios_and_resists_minority_outliers(
        r in prop::collection::vec(0.01..2.0f64, 3..15),
        m in prop::collection::vec(0.01..2.0f64, 15),
        bad in prop::collection::vec(1e-3..1e3f64, 7),
    ) {
        let n = r.len();
        let clean: Vec<(String, f64, Option<f64>)> = (0..n).map(|i| (format!("o{i}"), r[i], Some(m[i]))).collect();
        let (_, est) = fuse_scales(&clean).unwrap();
        for i in 0..n {
            for j in 0..n {
                let got = est[i].s / est[j].s;
                let want = r[i] / r[j];
                prop_assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }
        let ratios: Vec<f64> = (0..n).map(|i| m[i] / r[i]).collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let k = (n - 1) / 2;
        let mut dirty = clean.clone();
        for (i, v) in bad.iter().take(k).enumerate() {
            dirty[i].2 = Some(*v);
        }
        let (rho, _) = fuse_scales(&dirty).unwrap();
        prop_assert!(rho >= lo && rho <= hi, "{rho} outside [{lo}, {hi}]");
    }

    #[test]
    fn pnp_is_left_invariant(p in pose(), g in pose(), pts in prop::collection::vec(vec3(0.1), 8..20)) {
        let k = camera();
        let p = Pose::new(p.rotation, Vector3::new(0.05, -0.02, 0.8));
        let p2: Vec<Vector2<f64>> = pts
            .iter()
            .map(|x| {
                let c = p.transform_point(x);
                Vector2::new(k.f * c.x / c.z + k.cx, k.f * c.y / c.z + k.cy)
            })
            .collect();
        let moved: Vec<Vector3<f64>> = pts.iter().map(|x| g.transform_point(x)).collect();
        let a = solve_pnp(&pts, &p2, &k);
        prop_assume!(a.is_ok());
        let b = solve_pnp(&moved, &p2, &k).unwrap();
        prop_assert!(close(&b.pose, &(a.unwrap().pose * g.inverse())) < 1e-6);
    }

    #[test]
    fn chamfer_symmetric_and_zero_on_identity(a in pose(), b in pose(), seed in 0u64..100) {
        let m1 = TriangleMesh::cuboid(Vector3::new(0.05, 0.03, 0.02)).unwrap();
        let m2 = TriangleMesh::uv_sphere(0.04, 6, 8).unwrap();
        let ab = chamfer(&m1, &a, &m2, &b, 200, seed).unwrap();
        let ba = chamfer(&m2, &b, &m1, &a, 200, seed).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab > 0.0);
        prop_assert_eq!(chamfer(&m1, &a, &m1, &a, 200, seed).unwrap(), 0.0);
    }

    #[test]
    fn track_rot_error_ignores_global_rotation(
        pred in prop::collection::vec(rotation(), 8..16),
        noise in prop::collection::vec(vec3(0.2), 16),
        g in rotation(),
    ) {
        let gt: Vec<Rotation> = pred.iter().zip(&noise).map(|(r, n)| Rotation::exp(n) * *r).collect();
        let gamma = gamma_set(pred.len()).unwrap();
        let sym = SymmetrySet::identity();
        let base = track_rot_error(&pred, &gt, &sym, &gamma).unwrap();
        let gp: Vec<Rotation> = pred.iter().map(|r| *r * g).collect();
        let gg: Vec<Rotation> = gt.iter().map(|r| *r * g).collect();
        prop_assert!((track_rot_error(&gp, &gg, &sym, &gamma).unwrap() - base).abs() < 1e-9);
        let lp: Vec<Rotation> = pred.iter().map(|r| g * *r).collect();
        let lg: Vec<Rotation> = gt.iter().map(|r| g * *r).collect();
        prop_assert!((track_rot_error(&lp, &lg, &sym, &gamma).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn average_recall_monotone_in_thresholds(
        errors in prop::collection::vec(0.0..10.0f64, 1..50),
        th in prop::collection::vec(0.0..10.0f64, 1..10),
        bump in 0usize..10,
        by in 0.0..5.0f64,
    ) {
        let a = average_recall(&errors, &th).unwrap();
        let mut raised = th.clone();
        let i = bump % th.len();
        raised[i] += by;
        prop_assert!(average_recall(&errors, &raised).unwrap() >= a);
    }
}

#[test]
fn sampler_is_deterministic() {
    for n in [1, 7, 600, 1200] {
        assert_eq!(sample_so3(n).unwrap(), sample_so3(n).unwrap());
    }
}

#[test]
fn cou_zero_only_for_identical_silhouettes() {
    let k = camera();
    let mesh = TriangleMesh::cuboid(Vector3::new(0.05, 0.03, 0.02)).unwrap();
    let a = Pose::new(Rotation::exp(&Vector3::new(0.3, 0.2, 0.1)), Vector3::new(0.0, 0.0, 0.5));
    let b = Pose::new(a.rotation, Vector3::new(0.01, 0.0, 0.5));
    let ma = rasterize_silhouette(&mesh, &a, &k).unwrap();
    let mb = rasterize_silhouette(&mesh, &b, &k).unwrap();
    assert_eq!(cou(&ma, &ma).unwrap(), 0.0);
    assert!(cou(&ma, &mb).unwrap() > 0.0);
}

/// Frames of a correspondence set solve independently: dropping frames leaves
/// the remaining poses bit-identical, and every solved frame passes the RMS gate.
#[test]
fn refinement_is_per_frame() {
    let k = camera();
    let mut rng_state = 12345u64;
    let mut unit = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let pts: Vec<Vector3<f64>> = (0..40).map(|_| Vector3::new(unit(), unit(), unit()) * 0.2).collect();
    let frames: Vec<usize> = (0..12).collect();
    let tracks: Vec<Vec<(Vector2<f64>, bool)>> = frames
        .iter()
        .map(|&f| {
            let p = Pose::new(Rotation::exp(&Vector3::new(0.0, 0.05 * f as f64, 0.0)), Vector3::new(0.0, 0.0, 0.9));
            pts.iter()
                .map(|x| {
                    let c = p.transform_point(x);
                    let jitter = Vector2::new(unit(), unit());
                    (Vector2::new(k.f * c.x / c.z + k.cx, k.f * c.y / c.z + k.cy) + jitter, true)
                })
                .collect()
        })
        .collect();
    let cfg = TrackConfig::default();
    let full = refine_trajectory(&CorrespondenceSet::new(pts.clone(), frames.clone(), tracks.clone()).unwrap(), &k, &cfg).unwrap();
    let keep: Vec<usize> = (0..12).step_by(3).collect();
    let sub = CorrespondenceSet::new(pts, keep.clone(), keep.iter().map(|&f| tracks[f].clone()).collect()).unwrap();
    let part = refine_trajectory(&sub, &k, &cfg).unwrap();
    for (i, &f) in keep.iter().enumerate() {
        assert_eq!(part.frames[i].pose, full.frames[f].pose);
    }
    for fr in &full.frames {
        assert!(fr.rms.unwrap() <= cfg.rms_gate_px);
    }
}

#[test]
fn retargeting_zero_residual_and_base_equivariance() {
    let chain = KinematicChain::panda();
    let hold = forward_kinematics(&chain, &PANDA_READY);
    let still = optimize_trajectory(&RetargetProblem::new(vec![hold; 20], 0.05, PANDA_READY.to_vec()), &chain).unwrap();
    assert!(still.steps.iter().all(|s| s.residual < 1e-12));

    let q_goal: Vec<f64> = PANDA_READY.iter().zip([0.2, -0.1, 0.1, 0.2, -0.1, 0.1, 0.2]).map(|(a, b)| a + b).collect();
    let target = forward_kinematics(&chain, &q_goal);
    let targets: Vec<Pose> = (0..30).map(|t| hold.interpolate(&target, t as f64 / 29.0)).collect();
    let a = optimize_trajectory(&RetargetProblem::new(targets.clone(), 0.05, PANDA_READY.to_vec()), &chain).unwrap();
    let g = Pose::new(Rotation::exp(&Vector3::new(0.1, -0.4, 0.7)), Vector3::new(0.3, -0.2, 0.5));
    let moved = chain.clone().with_base(g * chain.base);
    let b = optimize_trajectory(&RetargetProblem::new(targets.iter().map(|p| g * *p).collect(), 0.05, PANDA_READY.to_vec()), &moved)
        .unwrap();
    for (x, y) in a.steps.iter().zip(&b.steps) {
        for (p, q) in x.q.iter().zip(&y.q) {
            assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cloud_scale_survives_rigid_motion(
        pts in prop::collection::vec(vec3(0.2), 30..200),
        stretch in 1.5..4.0f64,
        g in pose(),
    ) {
        // an elongated cloud keeps its principal axis well separated
        let cloud: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p.x * stretch, p.y, p.z)).collect();
        let moved: Vec<Vector3<f64>> = cloud.iter().map(|p| g.transform_point(p)).collect();
        for mode in [ScaleMode::MaxProjection, ScaleMode::Range] {
            let a = cloud_scale(&cloud, mode).unwrap();
            let b = cloud_scale(&moved, mode).unwrap();
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

/// Rotating the scene about the optical axis rotates the mask/depth pair about
/// the principal point; the recovered scale only moves by pixelization.
#[test]
fn relative_scale_ignores_in_plane_rotation() {
    let k = CameraIntrinsics::new(600.0, 160.0, 120.0, 320, 240).unwrap();
    let mesh = TriangleMesh::cuboid(Vector3::new(0.08, 0.03, 0.02)).unwrap();
    let base = Pose::new(Rotation::exp(&Vector3::new(0.2, 0.3, 0.0)), Vector3::new(0.0, 0.0, 0.6));
    let scale_at = |theta: f64| {
        let p = Pose::from_rotation(Rotation::exp(&Vector3::new(0.0, 0.0, theta))) * base;
        let depth = render_depth(&mesh, &p, &k).unwrap();
        let mut mask = BinaryMask::empty(k.width, k.height);
        for y in 0..k.height {
            for x in 0..k.width {
                mask.set(x, y, depth.get(x, y).is_some_and(|d| d > 0.0 && d.is_finite()));
            }
        }
        relative_scale(&depth, &mask, &k, ScaleMode::MaxProjection).unwrap()
    };
    let r0 = scale_at(0.0);
    for theta in [0.4, 1.1, 2.0, 3.0] {
        let r = scale_at(theta);
        assert!((r - r0).abs() / r0 < 0.02, "θ={theta}: {r} vs {r0}");
    }
}

/// With exact template features the matched template is the nearest sample, so
/// densifying the template set can only shrink the mean rotation error.
#[test]
fn denser_templates_do_not_increase_error() {
    let queries = sample_so3(997).unwrap();
    let tilt = Rotation::exp(&Vector3::new(0.31, -0.17, 0.45));
    let mean = |m: usize| {
        let t = sample_so3(m).unwrap();
        queries.iter().map(|q| nearest_sample(&t, &(tilt * *q)).1).sum::<f64>() / queries.len() as f64
    };
    let (a, b, c) = (mean(600), mean(1200), mean(1800));
    assert!(a >= b && b >= c, "{a} {b} {c}");
}
