use nalgebra::{Vector2, Vector3};

use crate::error::Result;
use crate::geometry::{BinaryMask, CameraIntrinsics, Pose, TriangleMesh};
use crate::scale::DepthMap;

/// Silhouette of a rendered mesh at the evaluation image size.
pub type SilhouetteMask = BinaryMask;

/// Subsamples per pixel side.
pub const SUPERSAMPLE: u32 = 2;

/// Camera-frame depth below which geometry is clipped away.
const NEAR: f64 = 1e-6;

/// Camera-frame vertices of every triangle, clipped to `z >= NEAR` and fanned
/// back into triangles.
fn camera_triangles(mesh: &TriangleMesh, pose: &Pose) -> Vec<[Vector3<f64>; 3]> {
    let mut out = Vec::with_capacity(mesh.triangles().len());
    for t in 0..mesh.triangles().len() {
        let tri = mesh.triangle_m(t).map(|p| pose.transform_point(&p));
        let poly = clip_near(&tri);
        for i in 1..poly.len().saturating_sub(1) {
            out.push([poly[0], poly[i], poly[i + 1]]);
        }
    }
    out
}

fn clip_near(tri: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    if tri.iter().all(|p| p.z >= NEAR) {
        return tri.to_vec();
    }
    let mut poly = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ina, inb) = (a.z >= NEAR, b.z >= NEAR);
        if ina {
            poly.push(a);
        }
        if ina != inb {
            let s = (NEAR - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * s;
            p.z = NEAR;
            poly.push(p);
        }
    }
    poly
}

fn to_screen(p: &Vector3<f64>, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new(k.f * p.x / p.z + k.cx, k.f * p.y / p.z + k.cy)
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Edge-function coverage; both windings count, so back faces are drawn.
#[inline]
fn covers(s: &[Vector2<f64>; 3], p: &Vector2<f64>) -> bool {
    let e0 = edge(&s[0], &s[1], p);
    let e1 = edge(&s[1], &s[2], p);
    let e2 = edge(&s[2], &s[0], p);
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}

fn sample_range(lo: f64, hi: f64, n: u32) -> Option<(u32, u32)> {
    // Sample i sits at (i + 0.5) / SUPERSAMPLE.
    let ss = SUPERSAMPLE as f64;
    let first = (lo * ss - 0.5).ceil().max(0.0);
    let last = (hi * ss - 0.5).floor().min(n as f64 - 1.0);
    if !(first <= last) {
        return None;
    }
    Some((first as u32, last as u32))
}

/// Binary silhouette of `mesh` under `pose`. A pixel is set when at least half
/// of its `SUPERSAMPLE`² subsamples fall inside some projected triangle.
/// Geometry entirely behind the camera yields an empty mask.
pub fn rasterize_silhouette(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> Result<SilhouetteMask> {
    k.validate()?;
    let (sw, sh) = (k.width * SUPERSAMPLE, k.height * SUPERSAMPLE);
    let mut cover = vec![false; sw as usize * sh as usize];
    let ss = SUPERSAMPLE as f64;
    for tri in camera_triangles(mesh, pose) {
        let s = tri.map(|p| to_screen(&p, k));
        if edge(&s[0], &s[1], &s[2]) == 0.0 {
            continue;
        }
        let (x0, x1) = (s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min), s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
        let (Some((ix0, ix1)), Some((iy0, iy1))) = (sample_range(x0, x1, sw), sample_range(y0, y1, sh)) else {
            continue;
        };
        for iy in iy0..=iy1 {
            let py = (iy as f64 + 0.5) / ss;
            for ix in ix0..=ix1 {
                let idx = iy as usize * sw as usize + ix as usize;
                if !cover[idx] && covers(&s, &Vector2::new((ix as f64 + 0.5) / ss, py)) {
                    cover[idx] = true;
                }
            }
        }
    }
    let need = (SUPERSAMPLE * SUPERSAMPLE).div_ceil(2);
    let mut mask = BinaryMask::empty(k.width, k.height);
    for y in 0..k.height {
        for x in 0..k.width {
            let mut n = 0;
            for dy in 0..SUPERSAMPLE {
                for dx in 0..SUPERSAMPLE {
                    let (sx, sy) = (x * SUPERSAMPLE + dx, y * SUPERSAMPLE + dy);
                    n += cover[sy as usize * sw as usize + sx as usize] as u32;
                }
            }
            if n >= need {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Z-buffered camera-frame depth at pixel centers; background pixels are 0.
pub fn render_depth(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> Result<DepthMap> {
    k.validate()?;
    let (w, h) = (k.width, k.height);
    let mut zbuf = vec![f64::INFINITY; w as usize * h as usize];
    for tri in camera_triangles(mesh, pose) {
        let s = tri.map(|p| to_screen(&p, k));
        let area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 {
            continue;
        }
        let inv_z = tri.map(|p| 1.0 / p.z);
        let bounds = |f: fn(&Vector2<f64>) -> f64| {
            let v = s.iter().map(f);
            let lo = v.clone().fold(f64::INFINITY, f64::min);
            let hi = v.fold(f64::NEG_INFINITY, f64::max);
            ((lo - 0.5).ceil().max(0.0), (hi - 0.5).floor())
        };
        let (x0, x1) = bounds(|p| p.x);
        let (y0, y1) = bounds(|p| p.y);
        let x1 = x1.min(w as f64 - 1.0);
        let y1 = y1.min(h as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            continue;
        }
        for y in y0 as u32..=y1 as u32 {
            for x in x0 as u32..=x1 as u32 {
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                if !covers(&s, &p) {
                    continue;
                }
                let b0 = edge(&s[1], &s[2], &p) / area;
                let b1 = edge(&s[2], &s[0], &p) / area;
                let b2 = 1.0 - b0 - b1;
                let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
                let idx = y as usize * w as usize + x as usize;
                if z < zbuf[idx] {
                    zbuf[idx] = z;
                }
            }
        }
    }
    DepthMap::new(w, h, zbuf.into_iter().map(|z| if z.is_finite() { z } else { 0.0 }).collect())
}
