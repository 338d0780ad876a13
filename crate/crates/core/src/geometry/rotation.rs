use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Rotation in SO(3), stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components, normalizing them.
    /// Inputs further than 1e-6 from unit norm are rejected.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("quaternion norm {n} is not 1")));
        }
        Ok(Rotation(UnitQuaternion::new_unchecked(q / n)))
    }

    /// Normalizes any non-zero quaternion.
    pub fn from_wxyz_normalized(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid("zero quaternion"));
        }
        Ok(Rotation(UnitQuaternion::new_unchecked(q / n)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Rotation(UnitQuaternion::from_matrix(m))
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Components `[w, x, y, z]` with the double cover resolved to `w >= 0`.
    pub fn to_wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Exponential map from an axis-angle vector.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        let theta = omega.norm();
        let half = 0.5 * theta;
        let (w, k) = if theta < 1e-8 {
            // sin(x/2)/x series
            (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
        } else {
            (half.cos(), half.sin() / theta)
        };
        let q = Quaternion::new(w, k * omega.x, k * omega.y, k * omega.z);
        Rotation(UnitQuaternion::new_normalize(q))
    }

    /// Logarithm map; the result has norm in `[0, pi]`.
    ///
    /// Works on the quaternion imaginary part, so a half turn returns its axis
    /// without going through the ill-conditioned trace formula.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.0.quaternion();
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let n = v.norm();
        if n < 1e-10 {
            // 2 atan(n/w)/n ~ 2/w (1 - n^2 / (3 w^2))
            return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
        }
        let angle = 2.0 * n.atan2(w);
        v * (angle / n)
    }

    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// Geodesic distance in radians, in `[0, pi]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }

    /// Point on the geodesic from `self` (alpha = 0) to `other` (alpha = 1).
    pub fn slerp(&self, other: &Rotation, alpha: f64) -> Rotation {
        let delta = (self.inverse() * *other).log();
        *self * Rotation::exp(&(delta * alpha))
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

pub fn so3_exp(omega: &Vector3<f64>) -> Rotation {
    Rotation::exp(omega)
}

pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    r.log()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = skew(omega);
    let (a, b) = if theta < 1e-5 {
        (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + w * a + w * w * b
}

/// Inverse of the SO(3) left Jacobian, valid for angles below 2 pi.
pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = skew(omega);
    let c = if theta < 1e-5 {
        1.0 / 12.0 + theta * theta / 720.0
    } else if (theta - PI).abs() < 1e-12 {
        1.0 / (PI * PI)
    } else {
        let t2 = theta * theta;
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / t2
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_omega(rng: &mut impl Rng, max_angle: f64) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n * rng.gen_range(0.0..max_angle);
            }
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let r = so3_exp(&Vector3::zeros());
        assert_eq!(r.to_wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_turn_about_x() {
        let q = so3_exp(&Vector3::new(PI, 0.0, 0.0)).to_wxyz();
        assert!(q[0].abs() < 1e-15);
        assert_relative_eq!(q[1], 1.0, epsilon = 1e-15);
        assert!(q[2].abs() < 1e-15 && q[3].abs() < 1e-15);
    }

    #[test]
    fn log_of_identity_and_quarter_turn() {
        assert_eq!(so3_log(&Rotation::identity()), Vector3::zeros());
        let r = Rotation::from_axis_angle(&Vector3::z(), PI / 2.0);
        let w = so3_log(&r);
        assert_relative_eq!(w, Vector3::new(0.0, 0.0, PI / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn log_at_half_turn_uses_quaternion_axis() {
        let r = Rotation::from_wxyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let w = so3_log(&r);
        assert_relative_eq!(w, Vector3::new(0.0, PI, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let w = random_omega(&mut rng, PI - 1e-6);
            let back = so3_log(&so3_exp(&w));
            assert!((back - w).norm() < 1e-9, "{w:?} -> {back:?}");
        }
    }

    #[test]
    fn log_matches_trace_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let a = so3_exp(&random_omega(&mut rng, PI));
            let b = so3_exp(&random_omega(&mut rng, PI));
            let rel = a.matrix() * b.matrix().transpose();
            let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            let theta = cos.acos();
            // trace formula is ill-conditioned near 0 and pi
            if theta > 1e-3 && theta < PI - 1e-3 {
                let got = so3_log(&Rotation::from_matrix(&rel)).norm();
                assert!((got - theta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn left_jacobian_inverse_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = random_omega(&mut rng, 3.0);
            let prod = so3_left_jacobian(&w) * so3_left_jacobian_inv(&w);
            assert!((prod - Matrix3::identity()).norm() < 1e-9);
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let w = Vector3::new(0.3, -0.7, 1.1);
        let j = so3_left_jacobian(&w);
        let h = 1e-6;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            // exp(w + d) = exp(J d) exp(w)
            let plus = (so3_exp(&(w + d)) * so3_exp(&w).inverse()).log();
            let minus = (so3_exp(&(w - d)) * so3_exp(&w).inverse()).log();
            let col = (plus - minus) / (2.0 * h);
            assert!((col - j.column(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn slerp_endpoints() {
        let a = so3_exp(&Vector3::new(0.1, 0.2, 0.3));
        let b = so3_exp(&Vector3::new(-0.5, 0.4, 0.9));
        assert!(a.slerp(&b, 0.0).angle_to(&a) < 1e-12);
        assert!(a.slerp(&b, 1.0).angle_to(&b) < 1e-9);
        let mid = a.slerp(&b, 0.5);
        assert_relative_eq!(mid.angle_to(&a), mid.angle_to(&b), epsilon = 1e-9);
    }
}
