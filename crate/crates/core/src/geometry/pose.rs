use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use super::rotation::{skew, so3_left_jacobian, so3_left_jacobian_inv, Rotation};
use crate::error::{Error, Result};

/// Rigid transform `x -> R x + t`. Translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(into = "crate::io::PoseJson", try_from = "crate::io::PoseJson")]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

/// Tangent vector of SE(3): rotational part first (radians), then translational (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub rot: Vector3<f64>,
    pub trans: Vector3<f64>,
}

impl Twist {
    pub fn new(rot: Vector3<f64>, trans: Vector3<f64>) -> Self {
        Twist { rot, trans }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rot.x,
            self.rot.y,
            self.rot.z,
            self.trans.x,
            self.trans.y,
            self.trans.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            rot: Vector3::new(v[0], v[1], v[2]),
            trans: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.rot.norm_squared() + self.trans.norm_squared()).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Twist {
            rot: self.rot * s,
            trans: self.trans * s,
        }
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Checked constructor rejecting non-finite translations.
    pub fn try_new(rotation: Rotation, translation: Vector3<f64>) -> Result<Self> {
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite translation"));
        }
        Ok(Self::new(rotation, translation))
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Pose::new(r, Vector3::zeros())
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose::new(r, -(r * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Pose {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Pose::new(
            Rotation::from_matrix(&r),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn exp(xi: &Twist) -> Pose {
        let r = Rotation::exp(&xi.rot);
        Pose::new(r, so3_left_jacobian(&xi.rot) * xi.trans)
    }

    pub fn log(&self) -> Twist {
        let w = self.rotation.log();
        Twist::new(w, so3_left_jacobian_inv(&w) * self.translation)
    }

    /// Point on the SE(3) geodesic from `self` (alpha = 0) to `other` (alpha = 1).
    pub fn interpolate(&self, other: &Pose, alpha: f64) -> Pose {
        let delta = (self.inverse() * *other).log();
        *self * Pose::exp(&delta.scaled(alpha))
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

pub fn se3_exp(xi: &Twist) -> Pose {
    Pose::exp(xi)
}

pub fn se3_log(t: &Pose) -> Twist {
    t.log()
}

/// Left Jacobian of SE(3) in (rot, trans) ordering: `exp(xi + d) ~ exp(J d) exp(xi)`.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let phi = xi.rot;
    let rho = xi.trans;
    let j = so3_left_jacobian(&phi);
    let q = se3_q_matrix(&phi, &rho);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    out
}

/// Inverse of [`se3_left_jacobian`] in closed block form.
pub fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let jinv = so3_left_jacobian_inv(&xi.rot);
    let q = se3_q_matrix(&xi.rot, &xi.trans);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-jinv * q * jinv));
    out
}

fn se3_q_matrix(phi: &Vector3<f64>, rho: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let p = skew(phi);
    let r = skew(rho);
    let (c1, c2, c3) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 / 6.0 - t2 / 120.0, 1.0 / 24.0 - t2 / 720.0, 1.0 / 120.0 - t2 / 2520.0)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (
            (theta - s) / t3,
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t3 * t2),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}
