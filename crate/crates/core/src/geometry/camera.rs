use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera with square pixels and no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::invalid(format!("focal length must be positive, got {f}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(CameraIntrinsics {
            f,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.f, self.cx, self.cy, self.width, self.height).map(|_| ())
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera(point.z));
    }
    Ok(Vector2::new(
        k.f * point.x / point.z + k.cx,
        k.f * point.y / point.z + k.cy,
    ))
}

pub fn backproject(pixel: &Vector2<f64>, depth: f64, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid(format!("depth must be positive, got {depth}")));
    }
    Ok(Vector3::new(
        (pixel.x - k.cx) * depth / k.f,
        (pixel.y - k.cy) * depth / k.f,
        depth,
    ))
}
