//! Python bindings for the geometric core: sampling, alignment, scale fusion,
//! PnP, retrieval and the evaluation metrics. Poses cross the boundary as
//! `(quat_wxyz, t)` tuples; intrinsics as `(f, cx, cy, width, height)`.

// false positive from the pyo3 function macros
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use p6d_core::descriptor::DescriptorIndex;
use p6d_core::geometry::{self, BBox, CameraIntrinsics, Pose, Rotation, TriangleMesh};
use p6d_core::metrics::{self, SymmetrySet};

type Quat = [f64; 4];
type PyPose = (Quat, [f64; 3]);
type Intrinsics = (f64, f64, f64, u32, u32);

fn err(e: p6d_core::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rotation(q: Quat) -> PyResult<Rotation> {
    Rotation::from_wxyz_normalized(q[0], q[1], q[2], q[3]).map_err(err)
}

fn pose((q, t): PyPose) -> PyResult<Pose> {
    Ok(Pose::new(rotation(q)?, Vector3::from(t)))
}

fn to_py(p: &Pose) -> PyPose {
    (p.rotation.to_wxyz(), p.translation.into())
}

fn camera((f, cx, cy, w, h): Intrinsics) -> PyResult<CameraIntrinsics> {
    CameraIntrinsics::new(f, cx, cy, w, h).map_err(err)
}

fn mesh(path: PathBuf, scale: f64) -> PyResult<TriangleMesh> {
    TriangleMesh::load_obj(&path, scale).map_err(err)
}

/// `n` near-uniform rotations as wxyz quaternions.
#[pyfunction]
fn sample_so3(n: usize) -> PyResult<Vec<Quat>> {
    Ok(geometry::sample_so3(n).map_err(err)?.iter().map(Rotation::to_wxyz).collect())
}

/// Geodesic angle in radians between two rotations.
#[pyfunction]
fn rotation_angle(a: Quat, b: Quat) -> PyResult<f64> {
    Ok(rotation(a)?.angle_to(&rotation(b)?))
}

/// Camera-frame translation placing an object of the given extents in a box
/// `(cx, cy, w, h)`.
#[pyfunction]
fn estimate_translation(bbox: [f64; 4], extents: [f64; 3], intrinsics: Intrinsics) -> PyResult<[f64; 3]> {
    let b = BBox::new(bbox[0], bbox[1], bbox[2], bbox[3]).map_err(err)?;
    let t = p6d_core::align::estimate_translation(&b, extents, &camera(intrinsics)?).map_err(err)?;
    Ok(t.into())
}

/// Scene factor and fused metric scales from `(id, relative, metric_prior)` triples.
#[pyfunction]
fn fuse_scales(inputs: Vec<(String, f64, Option<f64>)>) -> PyResult<(f64, Vec<(String, f64)>)> {
    let (rho, est) = p6d_core::scale::fuse_scales(&inputs).map_err(err)?;
    Ok((rho, est.into_iter().map(|e| (e.object_id, e.s)).collect()))
}

/// Pose of points `p3` (object frame) observed at pixels `p2`; returns the pose
/// and the RMS reprojection error.
#[pyfunction]
fn solve_pnp(p3: Vec<[f64; 3]>, p2: Vec<[f64; 2]>, intrinsics: Intrinsics) -> PyResult<(PyPose, f64)> {
    let p3: Vec<Vector3<f64>> = p3.into_iter().map(Vector3::from).collect();
    let p2: Vec<Vector2<f64>> = p2.into_iter().map(Vector2::from).collect();
    let sol = p6d_core::track::solve_pnp(&p3, &p2, &camera(intrinsics)?).map_err(err)?;
    Ok((to_py(&sol.pose), sol.rms))
}

/// Chamfer distance between two posed meshes loaded from OBJ files.
#[pyfunction]
#[pyo3(signature = (mesh_gt, pose_gt, mesh_pred, pose_pred, scale_gt=1.0, scale_pred=1.0, n=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn chamfer(
    mesh_gt: PathBuf,
    pose_gt: PyPose,
    mesh_pred: PathBuf,
    pose_pred: PyPose,
    scale_gt: f64,
    scale_pred: f64,
    n: usize,
    seed: u64,
) -> PyResult<f64> {
    metrics::chamfer(&mesh(mesh_gt, scale_gt)?, &pose(pose_gt)?, &mesh(mesh_pred, scale_pred)?, &pose(pose_pred)?, n, seed)
        .map_err(err)
}

/// Complement of silhouette IoU between two posed meshes.
#[pyfunction]
#[pyo3(signature = (mesh_gt, pose_gt, mesh_pred, pose_pred, intrinsics, scale_gt=1.0, scale_pred=1.0))]
fn cou(
    mesh_gt: PathBuf,
    pose_gt: PyPose,
    mesh_pred: PathBuf,
    pose_pred: PyPose,
    intrinsics: Intrinsics,
    scale_gt: f64,
    scale_pred: f64,
) -> PyResult<f64> {
    let k = camera(intrinsics)?;
    let a = metrics::rasterize_silhouette(&mesh(mesh_gt, scale_gt)?, &pose(pose_gt)?, &k).map_err(err)?;
    let b = metrics::rasterize_silhouette(&mesh(mesh_pred, scale_pred)?, &pose(pose_pred)?, &k).map_err(err)?;
    metrics::cou(&a, &b).map_err(err)
}

/// Relative rotation error (degrees per frame) between two rotation sequences,
/// minimized over a cyclic symmetry of `order` about `axis` (1 = none).
#[pyfunction]
#[pyo3(signature = (pred, gt, axis=[0.0, 0.0, 1.0], order=1))]
fn track_rot_error(pred: Vec<Quat>, gt: Vec<Quat>, axis: [f64; 3], order: usize) -> PyResult<f64> {
    let pred = pred.into_iter().map(rotation).collect::<PyResult<Vec<_>>>()?;
    let gt = gt.into_iter().map(rotation).collect::<PyResult<Vec<_>>>()?;
    let sym = if order <= 1 {
        SymmetrySet::identity()
    } else {
        SymmetrySet::cyclic(&Vector3::from(axis), order).map_err(err)?
    };
    let gamma = metrics::gamma_set(pred.len()).map_err(err)?;
    Ok(metrics::track_rot_error(&pred, &gt, &sym, &gamma).map_err(err)?.to_degrees())
}

/// Flat descriptor index with cosine top-k retrieval.
#[pyclass(name = "DescriptorIndex")]
struct PyIndex(DescriptorIndex);

#[pymethods]
impl PyIndex {
    #[new]
    fn new(dim: usize, items: Vec<(String, Vec<f32>)>) -> PyResult<Self> {
        Ok(PyIndex(DescriptorIndex::from_descriptors(dim, items).map_err(err)?))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyIndex(DescriptorIndex::read(&path).map_err(err)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn ids(&self) -> Vec<String> {
        self.0.ids().to_vec()
    }

    #[pyo3(signature = (query, k=5))]
    fn retrieve(&self, query: Vec<f32>, k: usize) -> PyResult<Vec<(String, f64)>> {
        Ok(self.0.retrieve(&query, k).map_err(err)?.into_iter().map(|h| (h.object_id, h.score)).collect())
    }
}

#[pymodule]
fn p6d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sample_so3, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_angle, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_translation, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_scales, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pnp, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(cou, m)?)?;
    m.add_function(wrap_pyfunction!(track_rot_error, m)?)?;
    m.add_class::<PyIndex>()?;
    Ok(())
}
