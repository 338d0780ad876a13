use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Triangle soup with an explicit unit: `scale` is meters per model unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    scale: f64,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>, scale: f64) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("mesh scale must be positive, got {scale}")));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("mesh has non-finite vertices"));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {} vertices", vertices.len())));
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            scale,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        TriangleMesh::new(self.vertices.clone(), self.triangles.clone(), scale)
    }

    /// Vertex `i` in meters.
    pub fn vertex_m(&self, i: usize) -> Vector3<f64> {
        self.vertices[i] * self.scale
    }

    /// Corners of triangle `t` in meters.
    pub fn triangle_m(&self, t: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertex_m(a), self.vertex_m(b), self.vertex_m(c)]
    }

    pub fn triangle_area_m2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_m(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Axis-aligned bounds in meters.
    pub fn bounds_m(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for t in &self.triangles {
            for &i in t {
                let v = self.vertex_m(i);
                lo = lo.inf(&v);
                hi = hi.sup(&v);
            }
        }
        (lo, hi)
    }

    /// Largest side of the model-frame bounding box, in meters.
    pub fn largest_dimension_m(&self) -> f64 {
        let (lo, hi) = self.bounds_m();
        (hi - lo).max()
    }

    /// Area-weighted uniform samples on the surface, in meters.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
        let tris: Vec<[Vector3<f64>; 3]> = (0..self.triangles.len()).map(|t| self.triangle_m(t)).collect();
        sample_triangles(&tris, n, seed)
    }

    pub fn parse_obj(text: &str, scale: f64, origin: &Path) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let mut parts = line.split_whitespace();
            let bad = |msg: &str| Error::format(origin, format!("line {}: {msg}", lineno + 1));
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("malformed vertex"))?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<&str> = parts.collect();
                    if idx.len() != 3 {
                        return Err(bad("only triangle faces are supported"));
                    }
                    let mut tri = [0usize; 3];
                    for (slot, tok) in tri.iter_mut().zip(idx) {
                        // "7", "7/1", "7//3", "7/1/3"
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad("malformed face index"))?;
                        *slot = if i > 0 {
                            (i - 1) as usize
                        } else if i < 0 && (-i) as usize <= vertices.len() {
                            vertices.len() - (-i) as usize
                        } else {
                            return Err(bad("face index out of range"));
                        };
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles, scale).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load_obj(path: &Path, scale: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text, scale, path)
    }

    /// OBJ text in model units; the scale travels separately.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    /// Box centered at the origin with outward-facing counter-clockwise triangles.
    pub fn cuboid(half: Vector3<f64>) -> Result<Self> {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            vertices.push(Vector3::new(sx * half.x, sy * half.y, sz * half.z));
        }
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(vertices, triangles, 1.0)
    }

    /// Closed cylinder along the model z axis.
    pub fn cylinder(radius: f64, half_height: f64, segments: usize) -> Result<Self> {
        let segments = segments.max(3);
        let mut vertices = Vec::with_capacity(2 * segments + 2);
        for k in 0..segments {
            let a = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
            let (s, c) = a.sin_cos();
            vertices.push(Vector3::new(radius * c, radius * s, -half_height));
            vertices.push(Vector3::new(radius * c, radius * s, half_height));
        }
        let bottom = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, -half_height));
        let top = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, half_height));
        let mut triangles = Vec::with_capacity(4 * segments);
        for k in 0..segments {
            let n = (k + 1) % segments;
            let (b0, t0, b1, t1) = (2 * k, 2 * k + 1, 2 * n, 2 * n + 1);
            triangles.push([b0, b1, t1]);
            triangles.push([b0, t1, t0]);
            triangles.push([bottom, b1, b0]);
            triangles.push([top, t0, t1]);
        }
        TriangleMesh::new(vertices, triangles, 1.0)
    }

    /// Latitude/longitude sphere centered at the origin.
    pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> Result<Self> {
        let stacks = stacks.max(2);
        let slices = slices.max(3);
        let mut vertices = vec![Vector3::new(0.0, 0.0, radius)];
        for i in 1..stacks {
            let phi = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let th = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
                vertices.push(Vector3::new(
                    radius * phi.sin() * th.cos(),
                    radius * phi.sin() * th.sin(),
                    radius * phi.cos(),
                ));
            }
        }
        let south = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, -radius));
        let ring = |i: usize, j: usize| 1 + (i - 1) * slices + (j % slices);
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
            triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        TriangleMesh::new(vertices, triangles, 1.0)
    }
}

/// Area-weighted uniform samples over a triangle list.
pub fn sample_triangles(tris: &[[Vector3<f64>; 3]], n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut cdf = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for [a, b, c] in tris {
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh("zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * total;
        let t = cdf.partition_point(|&c| c <= u).min(tris.len() - 1);
        let [a, b, c] = tris[t];
        let r1: f64 = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        out.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    Ok(out)
}
