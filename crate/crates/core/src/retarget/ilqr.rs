//! Torque-space trajectory optimization by iterative LQR.
//!
//! Joint dynamics are decoupled double integrators with constant inertia,
//! integrated semi-implicitly:
//!
//! ```text
//! qd[t+1] = qd[t] + dt * tau[t] / I
//! q[t+1]  = q[t]  + dt * qd[t+1]
//! ```
//!
//! Control `tau[t]` drives the state at `t + 1` toward target `t`. The cost is
//!
//! ```text
//! sum_t  w_d |log(T(q[t+1])^-1 T~[t])|^2 + w_qd |qd[t+1]|^2 + w_tau |tau[t]|^2
//!        + w_limit * (squared joint-limit violation of q[t+1])
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chain::{body_jacobian, forward_kinematics, KinematicChain};
use crate::error::{Error, Result};
use crate::geometry::{se3_left_jacobian_inv, Pose};

pub const DEFAULT_W_D: f64 = 100.0;
pub const DEFAULT_W_QD: f64 = 1e-2;
pub const DEFAULT_W_TAU: f64 = 1e-4;
pub const DEFAULT_W_LIMIT: f64 = 1e3;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetargetWeights {
    pub w_d: f64,
    pub w_qd: f64,
    pub w_tau: f64,
    pub w_limit: f64,
}

impl Default for RetargetWeights {
    fn default() -> Self {
        RetargetWeights {
            w_d: DEFAULT_W_D,
            w_qd: DEFAULT_W_QD,
            w_tau: DEFAULT_W_TAU,
            w_limit: DEFAULT_W_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetProblem {
    /// Object poses to follow, robot frame.
    pub targets: Vec<Pose>,
    pub dt: f64,
    pub weights: RetargetWeights,
    pub q0: Vec<f64>,
    /// Clamp joint positions into their limits during rollouts.
    pub project_limits: bool,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl RetargetProblem {
    pub fn new(targets: Vec<Pose>, dt: f64, q0: Vec<f64>) -> Self {
        RetargetProblem {
            targets,
            dt,
            weights: RetargetWeights::default(),
            q0,
            project_limits: true,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            rel_tol: DEFAULT_REL_TOL,
        }
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    fn validate(&self, chain: &KinematicChain) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid("retarget problem has no targets"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        let w = &self.weights;
        if !(w.w_d > 0.0) || !(w.w_qd >= 0.0) || !(w.w_tau >= 0.0) || !(w.w_limit >= 0.0) {
            return Err(Error::invalid("weights must be non-negative with w_d > 0"));
        }
        if self.q0.len() != chain.dof() {
            return Err(Error::DimMismatch {
                expected: chain.dof(),
                got: self.q0.len(),
            });
        }
        if !chain.within_limits(&self.q0) {
            return Err(Error::invalid("initial joint vector violates the joint limits"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStep {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub tau: Vec<f64>,
    pub obj_pose: Pose,
    /// `|log(T^-1 T~)|` against this step's target.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub dt: f64,
    pub steps: Vec<JointStep>,
    pub cost: f64,
    pub iterations: usize,
    /// Accepted-iteration cost history, starting with the initial rollout.
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

struct Rollout {
    /// States 0..=N, each `[q; qd]`.
    xs: Vec<DVector<f64>>,
    cost: f64,
}

struct Model<'a> {
    chain: &'a KinematicChain,
    problem: &'a RetargetProblem,
    n: usize,
    inv_inertia: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(chain: &'a KinematicChain, problem: &'a RetargetProblem) -> Self {
        Model {
            chain,
            problem,
            n: chain.dof(),
            inv_inertia: chain.inertias().iter().map(|i| 1.0 / i).collect(),
        }
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let dt = self.problem.dt;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let qd = x[n + i] + dt * u[i] * self.inv_inertia[i];
            out[n + i] = qd;
            out[i] = x[i] + dt * qd;
        }
        if self.problem.project_limits {
            for (i, j) in self.chain.joints.iter().enumerate() {
                if out[i] < j.limits.0 || out[i] > j.limits.1 {
                    out[i] = out[i].clamp(j.limits.0, j.limits.1);
                    out[n + i] = 0.0;
                }
            }
        }
        out
    }

    fn residual(&self, q: &[f64], t: usize) -> DVector<f64> {
        let pose = forward_kinematics(self.chain, q);
        let r = (pose.inverse() * self.problem.targets[t]).log().to_vector();
        DVector::from_iterator(6, r.iter().copied())
    }

    /// Cost of reaching state `x` for target `t`, excluding the control term.
    fn state_cost(&self, x: &DVector<f64>, t: usize) -> f64 {
        let n = self.n;
        let w = &self.problem.weights;
        let q: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let r = self.residual(&q, t);
        let mut c = w.w_d * r.norm_squared() + w.w_qd * x.rows(n, n).norm_squared();
        for (j, &v) in self.chain.joints.iter().zip(&q) {
            let e = (v - j.limits.1).max(0.0) + (j.limits.0 - v).max(0.0);
            c += w.w_limit * e * e;
        }
        c
    }

    /// Gradient and Gauss-Newton Hessian of [`Self::state_cost`].
    fn state_derivatives(&self, x: &DVector<f64>, t: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let w = &self.problem.weights;
        let q: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let (pose, jb) = body_jacobian(self.chain, &q);
        let rv = (pose.inverse() * self.problem.targets[t]).log();
        let r = DVector::from_iterator(6, rv.to_vector().iter().copied());
        let jl_inv = se3_left_jacobian_inv(&rv);
        let jr = -DMatrix::from_iterator(6, 6, jl_inv.iter().copied()) * jb;
        let mut g = DVector::zeros(2 * n);
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        let gq = jr.transpose() * &r * (2.0 * w.w_d);
        let hq = jr.transpose() * &jr * (2.0 * w.w_d);
        g.rows_mut(0, n).copy_from(&gq);
        h.view_mut((0, 0), (n, n)).copy_from(&hq);
        for i in 0..n {
            g[n + i] = 2.0 * w.w_qd * x[n + i];
            h[(n + i, n + i)] = 2.0 * w.w_qd;
            let j = &self.chain.joints[i];
            let e = (q[i] - j.limits.1).max(0.0) - (j.limits.0 - q[i]).max(0.0);
            if e != 0.0 {
                g[i] += 2.0 * w.w_limit * e;
                h[(i, i)] += 2.0 * w.w_limit;
            }
        }
        (g, h)
    }

    fn linearization(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let dt = self.problem.dt;
        let mut a = DMatrix::identity(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            a[(i, n + i)] = dt;
            b[(i, i)] = dt * dt * self.inv_inertia[i];
            b[(n + i, i)] = dt * self.inv_inertia[i];
        }
        (a, b)
    }

    fn x0(&self) -> DVector<f64> {
        let mut x = DVector::zeros(2 * self.n);
        x.rows_mut(0, self.n).copy_from_slice(&self.problem.q0);
        x
    }

    fn rollout(&self, us: &[DVector<f64>]) -> Rollout {
        let w_tau = self.problem.weights.w_tau;
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(self.x0());
        let mut cost = 0.0;
        for (t, u) in us.iter().enumerate() {
            let next = self.step(&xs[t], u);
            cost += w_tau * u.norm_squared() + self.state_cost(&next, t);
            xs.push(next);
        }
        Rollout { xs, cost }
    }

    /// Closed-loop rollout around a nominal trajectory with step size `alpha`.
    fn forward(&self, nominal: &Rollout, us: &[DVector<f64>], k: &[DVector<f64>], kk: &[DMatrix<f64>], alpha: f64) -> (Vec<DVector<f64>>, Rollout) {
        let w_tau = self.problem.weights.w_tau;
        let mut xs = vec![self.x0()];
        let mut new_us = Vec::with_capacity(us.len());
        let mut cost = 0.0;
        for t in 0..us.len() {
            let dx = &xs[t] - &nominal.xs[t];
            let u = &us[t] + &k[t] * alpha + &kk[t] * dx;
            let next = self.step(&xs[t], &u);
            cost += w_tau * u.norm_squared() + self.state_cost(&next, t);
            xs.push(next);
            new_us.push(u);
        }
        (new_us, Rollout { xs, cost })
    }
}

/// Total cost of a control sequence (one vector of joint torques per target).
pub fn trajectory_cost(problem: &RetargetProblem, chain: &KinematicChain, controls: &[Vec<f64>]) -> Result<f64> {
    problem.validate(chain)?;
    let model = Model::new(chain, problem);
    let us: Vec<DVector<f64>> = controls.iter().map(|u| DVector::from_column_slice(u)).collect();
    Ok(model.rollout(&us).cost)
}

/// Exact gradient of [`trajectory_cost`] with respect to the controls, by
/// backpropagation through the (unclamped) dynamics.
pub fn cost_gradient(problem: &RetargetProblem, chain: &KinematicChain, controls: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    problem.validate(chain)?;
    let model = Model::new(chain, problem);
    let us: Vec<DVector<f64>> = controls.iter().map(|u| DVector::from_column_slice(u)).collect();
    let roll = model.rollout(&us);
    let (a, b) = model.linearization();
    let mut lambda = DVector::zeros(2 * model.n);
    let mut grads = vec![Vec::new(); us.len()];
    for t in (0..us.len()).rev() {
        // lambda accumulates d cost / d x[t+1]
        let (g, _) = model.state_derivatives(&roll.xs[t + 1], t);
        lambda += g;
        let gu = &us[t] * (2.0 * problem.weights.w_tau) + b.transpose() * &lambda;
        grads[t] = gu.iter().copied().collect();
        lambda = a.transpose() * &lambda;
    }
    Ok(grads)
}

/// Solves the retargeting problem by iLQR with a backtracking line search;
/// every accepted iteration strictly decreases the cost.
pub fn optimize_trajectory(problem: &RetargetProblem, chain: &KinematicChain) -> Result<JointTrajectory> {
    problem.validate(chain)?;
    let model = Model::new(chain, problem);
    let n = model.n;
    let horizon = problem.horizon();
    let (a, b) = model.linearization();
    let mut us: Vec<DVector<f64>> = vec![DVector::zeros(n); horizon];
    let mut nominal = model.rollout(&us);
    if !nominal.cost.is_finite() {
        return Err(Error::Divergence(format!("initial cost is {}", nominal.cost)));
    }
    let mut history = vec![nominal.cost];
    let mut mu = 1e-6;
    let mut iterations = 0;
    let mut converged = false;
    let w_tau2 = 2.0 * problem.weights.w_tau;
    while iterations < problem.max_iterations {
        iterations += 1;
        // backward pass
        let mut vx = DVector::zeros(2 * n);
        let mut vxx = DMatrix::zeros(2 * n, 2 * n);
        let mut ks = vec![DVector::zeros(n); horizon];
        let mut kks = vec![DMatrix::zeros(n, 2 * n); horizon];
        let mut ok = true;
        for t in (0..horizon).rev() {
            let (g, h) = model.state_derivatives(&nominal.xs[t + 1], t);
            // value at x[t+1] includes its own state cost
            let vx1 = &vx + g;
            let vxx1 = &vxx + h;
            let qx = a.transpose() * &vx1;
            let qu = &us[t] * w_tau2 + b.transpose() * &vx1;
            let qxx = a.transpose() * &vxx1 * &a;
            let mut quu = b.transpose() * &vxx1 * &b + DMatrix::identity(n, n) * w_tau2;
            let qux = b.transpose() * &vxx1 * &a;
            for i in 0..n {
                quu[(i, i)] += mu;
            }
            let Some(ch) = quu.clone().cholesky() else {
                ok = false;
                break;
            };
            let k = -ch.solve(&qu);
            let kk = -ch.solve(&qux);
            vx = &qx + kk.transpose() * &quu * &k + kk.transpose() * &qu + qux.transpose() * &k;
            let v = &qxx + kk.transpose() * &quu * &kk + kk.transpose() * &qux + qux.transpose() * &kk;
            vxx = (&v + v.transpose()) * 0.5;
            ks[t] = k;
            kks[t] = kk;
        }
        if !ok {
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
            continue;
        }
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let (cand_us, cand) = model.forward(&nominal, &us, &ks, &kks, alpha);
            if !cand.cost.is_finite() {
                return Err(Error::Divergence(format!("cost became {} during line search", cand.cost)));
            }
            if cand.cost < nominal.cost {
                accepted = Some((cand_us, cand));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand_us, cand)) => {
                let rel = (nominal.cost - cand.cost) / nominal.cost.max(1e-300);
                us = cand_us;
                nominal = cand;
                history.push(nominal.cost);
                mu = (mu * 0.3).max(1e-9);
                if rel < problem.rel_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                mu *= 10.0;
                if mu > 1e12 {
                    // no descent direction left: at a (local) minimum
                    converged = true;
                    break;
                }
            }
        }
    }
    let steps = (0..horizon)
        .map(|t| {
            let x = &nominal.xs[t + 1];
            let q: Vec<f64> = x.rows(0, n).iter().copied().collect();
            let obj_pose = forward_kinematics(chain, &q);
            let residual = (obj_pose.inverse() * problem.targets[t]).log().norm();
            JointStep {
                q,
                qd: x.rows(n, n).iter().copied().collect(),
                tau: us[t].iter().copied().collect(),
                obj_pose,
                residual,
            }
        })
        .collect();
    Ok(JointTrajectory {
        dt: problem.dt,
        steps,
        cost: nominal.cost,
        iterations,
        cost_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retarget::chain::{inverse_kinematics, PANDA_READY};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_problem(offset: &[f64]) -> (RetargetProblem, KinematicChain) {
        let chain = KinematicChain::panda();
        let q_goal: Vec<f64> = PANDA_READY.iter().zip(offset).map(|(a, b)| a + b).collect();
        let target = forward_kinematics(&chain, &q_goal);
        (RetargetProblem::new(vec![target; 40], 0.05, PANDA_READY.to_vec()), chain)
    }

    #[test]
    fn held_targets_give_zero_cost() {
        let chain = KinematicChain::panda();
        let t = forward_kinematics(&chain, &PANDA_READY);
        let p = RetargetProblem::new(vec![t; 10], 0.05, PANDA_READY.to_vec());
        let sol = optimize_trajectory(&p, &chain).unwrap();
        assert!(sol.cost < 1e-20);
        for s in &sol.steps {
            assert!(s.tau.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn static_target_converges() {
        let (p, chain) = static_problem(&[0.3, 0.2, -0.1, 0.25, 0.1, -0.2, 0.3]);
        let sol = optimize_trajectory(&p, &chain).unwrap();
        let last = sol.steps.last().unwrap();
        assert!(last.residual < 1e-3, "{}", last.residual);
        for w in sol.cost_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        let (q_ik, r_ik) = inverse_kinematics(&chain, &p.targets[0], &PANDA_READY, 500);
        assert!(r_ik < 1e-9);
        let ik_pose = forward_kinematics(&chain, &q_ik);
        assert!((ik_pose.inverse() * last.obj_pose).log().norm() < 1e-3);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mut p, chain) = static_problem(&[0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]);
        p.targets.truncate(5);
        p.project_limits = false;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let us: Vec<Vec<f64>> = (0..5).map(|_| (0..7).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
        let g = cost_gradient(&p, &chain, &us).unwrap();
        let h = 1e-6;
        for t in 0..5 {
            for i in 0..7 {
                let mut up = us.clone();
                let mut um = us.clone();
                up[t][i] += h;
                um[t][i] -= h;
                let fd = (trajectory_cost(&p, &chain, &up).unwrap() - trajectory_cost(&p, &chain, &um).unwrap()) / (2.0 * h);
                let scale = fd.abs().max(g[t][i].abs()).max(1e-3);
                assert!((fd - g[t][i]).abs() / scale < 1e-4, "t={t} i={i} fd={fd} an={}", g[t][i]);
            }
        }
    }

    #[test]
    fn rigid_motion_equivariance() {
        let (p, chain) = static_problem(&[0.2, -0.1, 0.0, 0.2, 0.0, 0.1, 0.0]);
        let g = Pose::new(crate::geometry::Rotation::exp(&Vector3::new(0.1, 0.4, -0.3)), Vector3::new(0.3, -0.2, 0.1));
        let moved = RetargetProblem {
            targets: p.targets.iter().map(|t| g * *t).collect(),
            ..p.clone()
        };
        let a = optimize_trajectory(&p, &chain).unwrap();
        let b = optimize_trajectory(&moved, &chain.clone().with_base(g)).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            for (u, v) in x.q.iter().zip(&y.q) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invalid_start_is_rejected() {
        let (mut p, chain) = static_problem(&[0.0; 7]);
        p.q0[3] = 0.5;
        assert!(optimize_trajectory(&p, &chain).is_err());
    }
}
