use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Rotation};
use crate::io::{read_json, PoseJson};

const PANDA_JSON: &str = include_str!("../../profiles/panda.json");

/// Joint angles of the Panda "ready" configuration.
pub const PANDA_READY: [f64; 7] = [
    0.0,
    -std::f64::consts::FRAC_PI_4,
    0.0,
    -3.0 * std::f64::consts::FRAC_PI_4,
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_4,
];

/// Revolute joint: fixed `origin` from the parent frame, then rotation about `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub axis: Vector3<f64>,
    pub origin: Pose,
    pub limits: (f64, f64),
    pub velocity_limit: f64,
    pub effort_limit: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub base: Pose,
    pub joints: Vec<Joint>,
    /// Flange to gripper.
    pub tool: Pose,
    /// Gripper to held object.
    pub grasp: Pose,
}

#[derive(Debug, Serialize, Deserialize)]
struct JointJson {
    axis: [f64; 3],
    origin: PoseJson,
    limits: [f64; 2],
    vel_limit: f64,
    effort_limit: f64,
    inertia: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    joints: Vec<JointJson>,
    tool: PoseJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grasp: Option<PoseJson>,
}

impl KinematicChain {
    pub fn new(base: Pose, joints: Vec<Joint>, tool: Pose, grasp: Pose) -> Result<Self> {
        for (i, j) in joints.iter().enumerate() {
            if !((j.axis.norm() - 1.0).abs() < 1e-9) {
                return Err(Error::invalid(format!("joint {i}: axis is not a unit vector")));
            }
            if !(j.limits.0 < j.limits.1) {
                return Err(Error::invalid(format!("joint {i}: lower limit must be below upper limit")));
            }
            if !(j.inertia > 0.0) {
                return Err(Error::invalid(format!("joint {i}: inertia must be positive")));
            }
        }
        Ok(KinematicChain {
            base,
            joints,
            tool,
            grasp,
        })
    }

    /// The shipped Franka Emika Panda profile (identity base and grasp).
    pub fn panda() -> Self {
        Self::from_json_str(PANDA_JSON, Path::new("panda.json")).expect("shipped profile is valid")
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let c: ChainJson = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        Self::from_json(c).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: ChainJson = read_json(path)?;
        Self::from_json(c).map_err(|e| Error::format(path, e.to_string()))
    }

    fn from_json(c: ChainJson) -> Result<Self> {
        let joints = c
            .joints
            .iter()
            .map(|j| {
                Ok(Joint {
                    axis: Vector3::from(j.axis),
                    origin: j.origin.to_pose()?,
                    limits: (j.limits[0], j.limits[1]),
                    velocity_limit: j.vel_limit,
                    effort_limit: j.effort_limit,
                    inertia: j.inertia,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let base = c.base.map(|p| p.to_pose()).transpose()?.unwrap_or_default();
        let grasp = c.grasp.map(|p| p.to_pose()).transpose()?.unwrap_or_default();
        Self::new(base, joints, c.tool.to_pose()?, grasp)
    }

    pub fn with_grasp(mut self, grasp: Pose) -> Self {
        self.grasp = grasp;
        self
    }

    pub fn with_base(mut self, base: Pose) -> Self {
        self.base = base;
        self
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn inertias(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.inertia).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(q).all(|(j, &v)| v >= j.limits.0 && v <= j.limits.1)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(j.limits.0, j.limits.1);
        }
    }

    fn check(&self, q: &[f64]) {
        assert_eq!(q.len(), self.dof(), "joint vector length must equal the joint count");
    }

    /// World-frame joint axes and positions, plus the object pose.
    fn frames(&self, q: &[f64]) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Pose) {
        self.check(q);
        let mut t = self.base;
        let mut axes = Vec::with_capacity(q.len());
        let mut origins = Vec::with_capacity(q.len());
        for (j, &qi) in self.joints.iter().zip(q) {
            t = t * j.origin;
            axes.push(t.rotation * j.axis);
            origins.push(t.translation);
            t = t * Pose::from_rotation(Rotation::from_axis_angle(&j.axis, qi));
        }
        (axes, origins, t * self.tool * self.grasp)
    }
}

/// Object pose for joint vector `q`.
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Pose {
    chain.frames(q).2
}

/// Geometric Jacobian of the object frame in world coordinates: rows 0..3 are
/// angular velocity, rows 3..6 the linear velocity of the object origin.
pub fn jacobian(chain: &KinematicChain, q: &[f64]) -> DMatrix<f64> {
    let (axes, origins, obj) = chain.frames(q);
    let mut j = DMatrix::zeros(6, q.len());
    for (c, (z, p)) in axes.iter().zip(&origins).enumerate() {
        let v = z.cross(&(obj.translation - p));
        for r in 0..3 {
            j[(r, c)] = z[r];
            j[(r + 3, c)] = v[r];
        }
    }
    j
}

/// Jacobian of the body twist: `T(q + dq) ~ T(q) exp(J_b dq)`.
pub fn body_jacobian(chain: &KinematicChain, q: &[f64]) -> (Pose, DMatrix<f64>) {
    let (axes, origins, obj) = chain.frames(q);
    let rt: Matrix3<f64> = obj.rotation.matrix().transpose();
    let mut j = DMatrix::zeros(6, q.len());
    for (c, (z, p)) in axes.iter().zip(&origins).enumerate() {
        let w = rt * z;
        let v = rt * z.cross(&(obj.translation - p));
        for r in 0..3 {
            j[(r, c)] = w[r];
            j[(r + 3, c)] = v[r];
        }
    }
    (obj, j)
}

/// Damped least-squares inverse kinematics from `q_init` toward `target`,
/// staying inside the joint limits. Returns the joint vector and the final
/// residual norm `|log(T(q)^-1 target)|`.
pub fn inverse_kinematics(chain: &KinematicChain, target: &Pose, q_init: &[f64], iterations: usize) -> (Vec<f64>, f64) {
    let mut q = q_init.to_vec();
    chain.clamp(&mut q);
    let residual = |q: &[f64]| (forward_kinematics(chain, q).inverse() * *target).log().to_vector();
    let mut r = residual(&q);
    let mut damping = 1e-2;
    for _ in 0..iterations {
        if r.norm() < 1e-12 {
            break;
        }
        let (_, jb) = body_jacobian(chain, &q);
        let twist = crate::geometry::Twist::from_vector(&r);
        let jr = crate::geometry::se3_left_jacobian_inv(&twist);
        // r(q + dq) ~ r - J_l(r)^-1 J_b dq
        let j = DMatrix::from_iterator(6, 6, jr.iter().copied()) * jb;
        let rv = DVector::from_iterator(6, r.iter().copied());
        let jt = j.transpose();
        let lhs = &jt * &j + DMatrix::identity(q.len(), q.len()) * damping;
        let Some(ch) = lhs.cholesky() else { break };
        let dq = ch.solve(&(jt * rv));
        let mut cand: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        chain.clamp(&mut cand);
        let rc = residual(&cand);
        if rc.norm() < r.norm() {
            q = cand;
            r = rc;
            damping = (damping * 0.5).max(1e-9);
        } else {
            damping *= 10.0;
            if damping > 1e6 {
                break;
            }
        }
    }
    (q, r.norm())
}

/// Inverse kinematics from `q_init`, restarted from up to `restarts` random
/// in-limit configurations (seeded) while the residual stays above `tol`.
/// Returns the best solution found.
pub fn inverse_kinematics_multistart(
    chain: &KinematicChain,
    target: &Pose,
    q_init: &[f64],
    iterations: usize,
    restarts: usize,
    tol: f64,
    seed: u64,
) -> (Vec<f64>, f64) {
    let mut best = inverse_kinematics(chain, target, q_init, iterations);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        if best.1 <= tol {
            break;
        }
        let q: Vec<f64> = chain.joints.iter().map(|j| rng.gen_range(j.limits.0..=j.limits.1)).collect();
        let cand = inverse_kinematics(chain, target, &q, iterations);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    best
}
