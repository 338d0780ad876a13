//! EPnP with Gauss-Newton reprojection refinement and a RANSAC wrapper.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Rotation, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnpConfig {
    pub ransac: bool,
    /// Inlier threshold on reprojection error, pixels.
    pub inlier_threshold_px: f64,
    pub iterations: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for PnpConfig {
    fn default() -> Self {
        PnpConfig {
            ransac: true,
            inlier_threshold_px: 4.0,
            iterations: 200,
            sample_size: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub pose: Pose,
    /// Reprojection RMS over the inliers, pixels.
    pub rms: f64,
    pub inliers: Vec<bool>,
}

impl PnpSolution {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Relative eigenvalue below which a spread direction counts as flat.
const FLAT_RATIO: f64 = 1e-8;

struct ControlPoints {
    points: Vec<Vector3<f64>>,
    /// Barycentric weights per input point, `points.len()` each.
    alphas: Vec<Vec<f64>>,
}

fn control_points(pw: &[Vector3<f64>]) -> Result<ControlPoints> {
    let n = pw.len() as f64;
    let c0 = pw.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in pw {
        let d = p - c0;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l0 = eig.eigenvalues[order[0]];
    if !(l0 > 0.0) || eig.eigenvalues[order[1]] <= FLAT_RATIO * l0 {
        return Err(Error::DegenerateConfiguration);
    }
    let planar = eig.eigenvalues[order[2]] <= FLAT_RATIO * l0;
    let axes: Vec<Vector3<f64>> = order
        .iter()
        .take(if planar { 2 } else { 3 })
        .map(|&i| eig.eigenvectors.column(i).into_owned() * (eig.eigenvalues[i] / n).sqrt())
        .collect();
    let mut points = vec![c0];
    points.extend(axes.iter().map(|a| c0 + a));
    // axes are orthogonal, so barycentric coordinates are plain projections
    let alphas = pw
        .iter()
        .map(|p| {
            let d = p - c0;
            let a: Vec<f64> = axes.iter().map(|ax| d.dot(ax) / ax.norm_squared()).collect();
            let mut w = vec![1.0 - a.iter().sum::<f64>()];
            w.extend(a);
            w
        })
        .collect();
    Ok(ControlPoints { points, alphas })
}

fn reprojection_errors(pose: &Pose, pw: &[Vector3<f64>], uv: &[Vector2<f64>], k: &CameraIntrinsics) -> Vec<f64> {
    pw.iter()
        .zip(uv)
        .map(|(p, u)| {
            let c = pose.transform_point(p);
            if c.z <= 0.0 {
                return f64::INFINITY;
            }
            let proj = Vector2::new(k.f * c.x / c.z + k.cx, k.f * c.y / c.z + k.cy);
            (proj - u).norm()
        })
        .collect()
}

fn rms(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Rigid transform taking `src` onto `dst` in the least-squares sense.
pub(crate) fn procrustes(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Pose {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vector3<f64>>() / n;
    let md = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - md) * (s - ms).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut fix = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = u * fix * vt;
    let rot = Rotation::from_matrix(&r);
    Pose::new(rot, md - rot * ms)
}

fn pairs(nc: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..nc {
        for b in a + 1..nc {
            out.push((a, b));
        }
    }
    out
}

fn diff(v: &DVector<f64>, a: usize, b: usize) -> Vector3<f64> {
    Vector3::new(v[3 * a] - v[3 * b], v[3 * a + 1] - v[3 * b + 1], v[3 * a + 2] - v[3 * b + 2])
}

/// Refines the kernel weights so the camera-frame control points keep their
/// world-frame pairwise distances.
fn refine_betas(kernel: &[DVector<f64>], rho: &[f64], pr: &[(usize, usize)], betas: &mut [f64]) {
    let nb = betas.len();
    for _ in 0..10 {
        let mut j = DMatrix::zeros(pr.len(), nb);
        let mut r = DVector::zeros(pr.len());
        for (row, &(a, b)) in pr.iter().enumerate() {
            let ds: Vec<Vector3<f64>> = kernel[..nb].iter().map(|v| diff(v, a, b)).collect();
            let d: Vector3<f64> = ds.iter().zip(betas.iter()).map(|(d, &bk)| d * bk).sum();
            r[row] = d.norm_squared() - rho[row];
            for c in 0..nb {
                j[(row, c)] = 2.0 * d.dot(&ds[c]);
            }
        }
        let step = match j.clone().svd(true, true).solve(&r, 1e-12) {
            Ok(s) => s,
            Err(_) => return,
        };
        for c in 0..nb {
            betas[c] -= step[c];
        }
        if step.norm() < 1e-14 * (1.0 + betas.iter().map(|b| b * b).sum::<f64>().sqrt()) {
            return;
        }
    }
}

/// Closed-form EPnP estimate without the final reprojection refinement.
fn epnp(pw: &[Vector3<f64>], uv: &[Vector2<f64>], k: &CameraIntrinsics) -> Result<Pose> {
    let cp = control_points(pw)?;
    let nc = cp.points.len();
    let dim = 3 * nc;
    let mut mtm = DMatrix::<f64>::zeros(dim, dim);
    let mut row1 = DVector::<f64>::zeros(dim);
    let mut row2 = DVector::<f64>::zeros(dim);
    for (alpha, u) in cp.alphas.iter().zip(uv) {
        let x = (u.x - k.cx) / k.f;
        let y = (u.y - k.cy) / k.f;
        row1.fill(0.0);
        row2.fill(0.0);
        for j in 0..nc {
            row1[3 * j] = alpha[j];
            row1[3 * j + 2] = -alpha[j] * x;
            row2[3 * j + 1] = alpha[j];
            row2[3 * j + 2] = -alpha[j] * y;
        }
        mtm += &row1 * row1.transpose() + &row2 * row2.transpose();
    }
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kernel: Vec<DVector<f64>> = order.iter().take(4).map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let pr = pairs(nc);
    let rho: Vec<f64> = pr.iter().map(|&(a, b)| (cp.points[a] - cp.points[b]).norm_squared()).collect();

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    // one kernel vector: scale from distance ratios
    {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &(a, b)) in pr.iter().enumerate() {
            let d = diff(&kernel[0], a, b).norm();
            num += rho[i].sqrt() * d;
            den += d * d;
        }
        candidates.push(vec![num / den]);
    }
    // two and three kernel vectors: linearized products of betas
    for nb in 2..=3usize {
        let prods: Vec<(usize, usize)> = (0..nb).flat_map(|i| (i..nb).map(move |j| (i, j))).collect();
        if prods.len() > pr.len() {
            break;
        }
        let mut l = DMatrix::zeros(pr.len(), prods.len());
        for (row, &(a, b)) in pr.iter().enumerate() {
            let ds: Vec<Vector3<f64>> = kernel[..nb].iter().map(|v| diff(v, a, b)).collect();
            for (c, &(i, j)) in prods.iter().enumerate() {
                l[(row, c)] = if i == j { ds[i].dot(&ds[i]) } else { 2.0 * ds[i].dot(&ds[j]) };
            }
        }
        let sol = match l.svd(true, true).solve(&DVector::from_column_slice(&rho), 1e-12) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let get = |i: usize, j: usize| sol[prods.iter().position(|&p| p == (i, j)).expect("product present")];
        let b0 = get(0, 0).abs().sqrt();
        let mut betas = vec![b0];
        for i in 1..nb {
            let bi = get(i, i).abs().sqrt();
            betas.push(if get(0, i) < 0.0 { -bi } else { bi });
        }
        candidates.push(betas);
    }

    let mut best: Option<(f64, Pose)> = None;
    for mut betas in candidates {
        refine_betas(&kernel, &rho, &pr, &mut betas);
        let mut cc: Vec<Vector3<f64>> = (0..nc)
            .map(|j| {
                kernel
                    .iter()
                    .zip(&betas)
                    .map(|(v, &b)| Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]) * b)
                    .sum()
            })
            .collect();
        let mut pc: Vec<Vector3<f64>> = cp
            .alphas
            .iter()
            .map(|a| a.iter().zip(&cc).map(|(&w, c)| c * w).sum())
            .collect();
        if pc.iter().map(|p| p.z).sum::<f64>() < 0.0 {
            cc.iter_mut().for_each(|c| *c = -*c);
            pc.iter_mut().for_each(|p| *p = -*p);
        }
        let pose = procrustes(pw, &pc);
        let err = rms(&reprojection_errors(&pose, pw, uv, k));
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::DegenerateConfiguration)
}

/// Levenberg-Marquardt on the pixel reprojection error with left SE(3) updates.
pub(crate) fn refine_pose(pose: Pose, pw: &[Vector3<f64>], uv: &[Vector2<f64>], k: &CameraIntrinsics) -> Pose {
    let cost = |p: &Pose| reprojection_errors(p, pw, uv, k).iter().map(|e| e * e).sum::<f64>();
    let mut pose = pose;
    let mut current = cost(&pose);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (p, u) in pw.iter().zip(uv) {
            let c = pose.transform_point(p);
            if c.z <= 0.0 {
                continue;
            }
            let iz = 1.0 / c.z;
            let r = Vector2::new(k.f * c.x * iz + k.cx - u.x, k.f * c.y * iz + k.cy - u.y);
            let dpi = Matrix2x3::new(k.f * iz, 0.0, -k.f * c.x * iz * iz, 0.0, k.f * iz, -k.f * c.y * iz * iz);
            let mut dc = nalgebra::Matrix3x6::<f64>::zeros();
            dc.fixed_view_mut::<3, 3>(0, 0).copy_from(&-crate::geometry::skew(&c));
            dc.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = dpi * dc;
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate = Pose::exp(&Twist::from_vector(&step)) * pose;
            let c = cost(&candidate);
            if c < current {
                let rel = (current - c) / current.max(1e-300);
                pose = candidate;
                current = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = rel > 1e-15 && step.norm() > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    pose
}

fn check_inputs(pw: &[Vector3<f64>], uv: &[Vector2<f64>]) -> Result<()> {
    if pw.len() != uv.len() {
        return Err(Error::DimMismatch {
            expected: pw.len(),
            got: uv.len(),
        });
    }
    if pw.len() < 4 {
        return Err(Error::NotEnoughPoints { need: 4, got: pw.len() });
    }
    Ok(())
}

/// EPnP followed by reprojection refinement, using every correspondence.
pub fn solve_pnp(points3d: &[Vector3<f64>], points2d: &[Vector2<f64>], k: &CameraIntrinsics) -> Result<PnpSolution> {
    check_inputs(points3d, points2d)?;
    let pose = refine_pose(epnp(points3d, points2d, k)?, points3d, points2d, k);
    let errors = reprojection_errors(&pose, points3d, points2d, k);
    let r = rms(&errors);
    if !r.is_finite() {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(PnpSolution {
        pose,
        rms: r,
        inliers: vec![true; points3d.len()],
    })
}

fn subset<T: Copy>(v: &[T], mask: &[bool]) -> Vec<T> {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect()
}

/// RANSAC over EPnP minimal-ish samples, then a refit on the consensus set.
pub fn solve_pnp_ransac(
    points3d: &[Vector3<f64>],
    points2d: &[Vector2<f64>],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PnpSolution> {
    check_inputs(points3d, points2d)?;
    let n = points3d.len();
    let m = cfg.sample_size.max(4);
    if !cfg.ransac || n <= m {
        return solve_pnp(points3d, points2d, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    for _ in 0..cfg.iterations {
        let idx = sample(&mut rng, n, m).into_vec();
        let sp: Vec<Vector3<f64>> = idx.iter().map(|&i| points3d[i]).collect();
        let su: Vec<Vector2<f64>> = idx.iter().map(|&i| points2d[i]).collect();
        let pose = match epnp(&sp, &su, k) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let errors = reprojection_errors(&pose, points3d, points2d, k);
        let inliers: Vec<bool> = errors.iter().map(|&e| e < cfg.inlier_threshold_px).collect();
        let count = inliers.iter().filter(|&&b| b).count();
        let score: f64 = errors.iter().map(|&e| e.min(cfg.inlier_threshold_px)).sum();
        let better = match &best {
            None => true,
            Some((c, s, _)) => count > *c || (count == *c && score < *s),
        };
        if better {
            best = Some((count, score, inliers));
        }
    }
    let (count, _, mut inliers) = best.ok_or(Error::DegenerateConfiguration)?;
    if count < 4 {
        return Err(Error::DegenerateConfiguration);
    }
    let mut pose = Pose::identity();
    for _ in 0..3 {
        let sp = subset(points3d, &inliers);
        let su = subset(points2d, &inliers);
        if sp.len() < 4 {
            return Err(Error::DegenerateConfiguration);
        }
        pose = refine_pose(epnp(&sp, &su, k)?, &sp, &su, k);
        let errors = reprojection_errors(&pose, points3d, points2d, k);
        let next: Vec<bool> = errors.iter().map(|&e| e < cfg.inlier_threshold_px).collect();
        if next == inliers {
            break;
        }
        inliers = next;
    }
    let errors = reprojection_errors(&pose, &subset(points3d, &inliers), &subset(points2d, &inliers), k);
    if errors.is_empty() {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(PnpSolution {
        pose,
        rms: rms(&errors),
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut impl Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let w = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 2.5;
        Pose::new(
            Rotation::exp(&w),
            Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(1.0..3.0)),
        )
    }

    fn scene(rng: &mut impl Rng, n: usize, pose: &Pose) -> (Vec<Vector3<f64>>, Vec<Vector2<f64>>) {
        let pw: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)))
            .collect();
        let kk = k();
        let uv = pw
            .iter()
            .map(|p| crate::geometry::project(&pose.transform_point(p), &kk).unwrap())
            .collect();
        (pw, uv)
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let gt = random_pose(&mut rng);
            let (pw, uv) = scene(&mut rng, 20, &gt);
            let sol = solve_pnp(&pw, &uv, &k()).unwrap();
            assert!(sol.pose.rotation.angle_to(&gt.rotation) < 1e-6);
            assert!((sol.pose.translation - gt.translation).norm() < 1e-6);
        }
    }

    #[test]
    fn planar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let gt = random_pose(&mut rng);
            let pw: Vec<Vector3<f64>> =
                (0..12).map(|_| Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0)).collect();
            let uv: Vec<Vector2<f64>> =
                pw.iter().map(|p| crate::geometry::project(&gt.transform_point(p), &k()).unwrap()).collect();
            let sol = solve_pnp(&pw, &uv, &k()).unwrap();
            assert!(sol.pose.rotation.angle_to(&gt.rotation) < 1e-6);
            assert!((sol.pose.translation - gt.translation).norm() < 1e-6);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let p = vec![Vector3::new(0.1, 0.2, 0.3); 6];
        let u = vec![Vector2::new(1.0, 2.0); 6];
        assert!(matches!(solve_pnp(&p, &u, &k()), Err(Error::DegenerateConfiguration)));
        assert!(matches!(solve_pnp(&p[..3], &u[..3], &k()), Err(Error::NotEnoughPoints { .. })));
        let line: Vec<Vector3<f64>> = (0..6).map(|i| Vector3::new(i as f64, 0.0, 5.0)).collect();
        assert!(matches!(solve_pnp(&line, &u, &k()), Err(Error::DegenerateConfiguration)));
    }

    #[test]
    fn noisy_translation_within_two_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let gt = random_pose(&mut rng);
            let (pw, mut uv) = scene(&mut rng, 100, &gt);
            for u in uv.iter_mut() {
                *u += Vector2::new(gaussian(&mut rng), gaussian(&mut rng));
            }
            let sol = solve_pnp(&pw, &uv, &k()).unwrap();
            assert!((sol.pose.translation - gt.translation).norm() < 0.02 * gt.translation.z);
        }
    }

    #[test]
    fn left_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_pose(&mut rng);
        let (pw, uv) = scene(&mut rng, 30, &gt);
        let g = Pose::new(Rotation::exp(&Vector3::new(0.3, 0.1, -0.7)), Vector3::new(0.5, -0.2, 0.1));
        let moved: Vec<Vector3<f64>> = pw.iter().map(|p| g.transform_point(p)).collect();
        let a = solve_pnp(&pw, &uv, &k()).unwrap().pose;
        let b = solve_pnp(&moved, &uv, &k()).unwrap().pose;
        let expect = a * g.inverse();
        assert!(b.rotation.angle_to(&expect.rotation) < 1e-6);
        assert!((b.translation - expect.translation).norm() < 1e-6);
    }

    #[test]
    fn ransac_rejects_gross_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let gt = random_pose(&mut rng);
            let (pw, mut uv) = scene(&mut rng, 100, &gt);
            for (i, u) in uv.iter_mut().enumerate() {
                if i % 10 < 3 {
                    *u = Vector2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
                } else {
                    *u += Vector2::new(gaussian(&mut rng), gaussian(&mut rng));
                }
            }
            let cfg = PnpConfig {
                seed: trial,
                ..Default::default()
            };
            let sol = solve_pnp_ransac(&pw, &uv, &k(), &cfg).unwrap();
            assert!(sol.pose.rotation.angle_to(&gt.rotation).to_degrees() < 1.0);
            assert!((sol.pose.translation - gt.translation).norm() < 0.01 * gt.translation.z);
            assert!(sol.rms < 4.0);
        }
    }

    #[test]
    fn procrustes_recovers_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_pose(&mut rng);
        let src: Vec<Vector3<f64>> =
            (0..10).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let dst: Vec<Vector3<f64>> = src.iter().map(|p| t.transform_point(p)).collect();
        let est = procrustes(&src, &dst);
        assert!(est.rotation.angle_to(&t.rotation) < 1e-10);
    }
}
