//! Virtual forward dynamics Cartesian motion control.
//!
//! A PD law on the TCP pose error produces a wrench that drives a virtual
//! copy of the manipulator. The virtual chain carries conditioned masses
//! (a heavy tip, near-massless intermediate links) so that its
//! operational-space response is close to decoupled. Each cycle starts the
//! virtual model from rest, solves `(H + λI) q̈ = Jᵀ f` and integrates one
//! semi-implicit Euler step; the resulting joint positions are the IK output.

use nalgebra::{Cholesky, DVector, Dyn, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::frames::{FrameTag, Wrench};
use crate::kinematics::{joint_space_inertia, pose_and_jacobian, Pose, SerialChain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VfdmParams {
    pub kp_trans: f64,
    pub kd_trans: f64,
    pub kp_rot: f64,
    pub kd_rot: f64,
    /// Tip link mass, kg.
    pub m_e: f64,
    /// Mass of every other link, kg.
    pub m_l: f64,
    #[serde(rename = "I_e", with = "mat3_rows")]
    pub i_e: Matrix3<f64>,
    #[serde(rename = "I_l", with = "mat3_rows")]
    pub i_l: Matrix3<f64>,
    /// Virtual integration step per cycle, s.
    pub dt_ctrl: f64,
    pub max_iters: usize,
    pub tol_pos: f64,
    pub tol_rot: f64,
    /// λ added to the diagonal of H.
    pub regularization: f64,
}

impl Default for VfdmParams {
    fn default() -> Self {
        let i_e = Matrix3::identity();
        VfdmParams {
            kp_trans: 10.0,
            kd_trans: 0.0,
            kp_rot: 1.0,
            kd_rot: 0.0,
            m_e: 1.0,
            m_l: 0.01,
            i_e,
            i_l: i_e * 1e-6,
            dt_ctrl: DEFAULT_DT_CTRL,
            max_iters: 2000,
            tol_pos: 1e-4,
            tol_rot: 1e-3,
            regularization: 1e-8,
        }
    }
}

/// Default virtual integration step. With the default gains and a unit
/// tip mass, one cycle removes `kp·dt²` (about 2 %) of the translational error.
pub const DEFAULT_DT_CTRL: f64 = 0.045;

impl VfdmParams {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        for (name, v) in [
            ("kp_trans", self.kp_trans),
            ("kd_trans", self.kd_trans),
            ("kp_rot", self.kp_rot),
            ("kd_rot", self.kd_rot),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errors.push(format!("{ctx}.{name} must be >= 0"));
            }
        }
        if !(self.m_e > 0.0) {
            errors.push(format!("{ctx}.m_e must be > 0"));
        }
        if !(self.m_l >= 0.0) {
            errors.push(format!("{ctx}.m_l must be >= 0"));
        }
        if !(self.dt_ctrl > 0.0 && self.dt_ctrl.is_finite()) {
            errors.push(format!("{ctx}.dt_ctrl must be > 0"));
        }
        if !(self.regularization >= 0.0) {
            errors.push(format!("{ctx}.regularization must be >= 0"));
        }
        if !(self.tol_pos > 0.0 && self.tol_rot > 0.0) {
            errors.push(format!("{ctx}.tol_pos and tol_rot must be > 0"));
        }
        for (name, m) in [("I_e", &self.i_e), ("I_l", &self.i_l)] {
            let sym = (m - m.transpose()).abs().max() <= 1e-12;
            if !sym || m.symmetric_eigenvalues().min() < -1e-12 {
                errors.push(format!("{ctx}.{name} must be symmetric positive semidefinite"));
            }
        }
    }
}

mod mat3_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

/// Translational (m) and rotational (axis-angle, rad) pose error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartesianError {
    pub translational: Vector3<f64>,
    pub rotational: Vector3<f64>,
}

impl CartesianError {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        let (t, r) = (self.translational, self.rotational);
        Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
    }

    /// Euclidean norm of the stacked 6-vector.
    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    fn rate_from(&self, prev: &CartesianError, dt: f64) -> CartesianError {
        CartesianError {
            translational: (self.translational - prev.translational) / dt,
            rotational: (self.rotational - prev.rotational) / dt,
        }
    }
}

/// Error from `current` to `target`, both in the base frame.
///
/// The rotational part is the shortest axis-angle vector of
/// `R(target) · R(current)ᵀ`, so its magnitude never exceeds π.
pub fn pose_error(target: &Pose, current: &Pose) -> Result<CartesianError> {
    for (name, p) in [("target", target), ("current", current)] {
        let n = p.orientation.into_inner().norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "{name} orientation is not unit norm ({n})"
            )));
        }
    }
    let q = (target.orientation * current.orientation.inverse()).into_inner();
    let (v, w) = if q.w < 0.0 {
        (-q.imag(), -q.w)
    } else {
        (q.imag(), q.w)
    };
    let s = v.norm();
    let rotational = if s < 1e-300 {
        Vector3::zeros()
    } else {
        v * (2.0 * s.atan2(w) / s)
    };
    Ok(CartesianError {
        translational: target.position - current.position,
        rotational,
    })
}

/// PD law on the pose error; the result is expressed in the task frame,
/// which shares the base-frame axes used by the Jacobian.
pub fn control_wrench(e: &CartesianError, e_dot: &CartesianError, params: &VfdmParams) -> Wrench {
    Wrench::new(
        params.kp_trans * e.translational + params.kd_trans * e_dot.translational,
        params.kp_rot * e.rotational + params.kd_rot * e_dot.rotational,
        FrameTag::Task,
    )
}

/// Copy of `chain` with the conditioned virtual mass distribution: the tip
/// link carries `m_e`/`I_e` at the TCP, every other link `m_l`/`I_l` at its
/// joint origin.
pub fn conditioned_chain(chain: &SerialChain, params: &VfdmParams) -> SerialChain {
    let mut out = chain.clone();
    let tcp = chain.tcp_offset();
    let n = out.dof();
    for (k, link) in out.links_mut().iter_mut().enumerate() {
        if k + 1 == n {
            link.mass = params.m_e;
            link.com = tcp.position;
            // I_e is given in the TCP frame; express it in the link frame.
            let r = tcp.rotation_matrix();
            link.inertia = r * params.i_e * r.transpose();
        } else {
            link.mass = params.m_l;
            link.com = Vector3::zeros();
            link.inertia = params.i_l;
        }
    }
    out
}

fn regularized_cholesky(
    chain: &SerialChain,
    q: &[f64],
    regularization: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let mut h = joint_space_inertia(chain, q)?;
    for i in 0..h.nrows() {
        h[(i, i)] += regularization;
    }
    Cholesky::new(h).ok_or_else(|| Error::NotPositiveDefinite { q: q.to_vec() })
}

fn wrench_vector(f: &Wrench) -> DVector<f64> {
    DVector::from_column_slice(&[
        f.force.x, f.force.y, f.force.z, f.torque.x, f.torque.y, f.torque.z,
    ])
}

/// Joint accelerations of the virtual model at rest under the task wrench:
/// `(H + λI)⁻¹ Jᵀ f`, via Cholesky.
pub fn forward_dynamics_accel(
    chain: &SerialChain,
    q: &[f64],
    f: &Wrench,
    regularization: f64,
) -> Result<DVector<f64>> {
    f.expect_frame(FrameTag::Task)?;
    let (_, jac) = pose_and_jacobian(chain, q)?;
    let chol = regularized_cholesky(chain, q, regularization)?;
    Ok(chol.solve(&(jac.transpose() * wrench_vector(f))))
}

/// `J (H + λI)⁻¹ Jᵀ`, the inverse operational-space inertia.
pub fn operational_space_inertia_inv(
    chain: &SerialChain,
    q: &[f64],
    regularization: f64,
) -> Result<Matrix6<f64>> {
    let (_, jac) = pose_and_jacobian(chain, q)?;
    let chol = regularized_cholesky(chain, q, regularization)?;
    let x = chol.solve(&jac.transpose());
    let m = &jac * x;
    // Symmetrize away rounding.
    let m = Matrix6::from_fn(|i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput {
    pub q_next: Vec<f64>,
    /// Error before the cycle.
    pub error: CartesianError,
}

/// One control cycle from rest, with an explicit error rate for the D term.
pub fn vfdm_cycle_with_rate(
    chain: &SerialChain,
    q: &[f64],
    target: &Pose,
    e_dot: &CartesianError,
    params: &VfdmParams,
) -> Result<CycleOutput> {
    check_len(chain.dof(), q.len())?;
    let (pose, jac) = pose_and_jacobian(chain, q)?;
    let error = pose_error(target, &pose)?;
    if error.as_vector() == Vector6::zeros() && *e_dot == CartesianError::zero() {
        return Ok(CycleOutput {
            q_next: q.to_vec(),
            error,
        });
    }
    let f = control_wrench(&error, e_dot, params);
    let chol = regularized_cholesky(chain, q, params.regularization)?;
    let qdd = chol.solve(&(jac.transpose() * wrench_vector(&f)));

    // Semi-implicit Euler from q̇ = 0.
    let dt = params.dt_ctrl;
    let q_next: Vec<f64> = q
        .iter()
        .zip(qdd.iter())
        .map(|(qi, a)| qi + (a * dt) * dt)
        .collect();
    if q_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("virtual joint update at q = {q:?}")));
    }
    Ok(CycleOutput { q_next, error })
}

/// One control cycle with no derivative information (ė = 0).
pub fn vfdm_cycle(
    chain: &SerialChain,
    q: &[f64],
    target: &Pose,
    params: &VfdmParams,
) -> Result<CycleOutput> {
    vfdm_cycle_with_rate(chain, q, target, &CartesianError::zero(), params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub q: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Error at the returned `q`.
    pub error: CartesianError,
}

/// Iterates cycles until both tolerances hold or `max_iters` is reached.
pub fn solve_to_convergence(
    chain: &SerialChain,
    q0: &[f64],
    target: &Pose,
    params: &VfdmParams,
) -> Result<Solution> {
    let mut ctrl = VfdmController::new(*params);
    let mut q = q0.to_vec();
    for iterations in 0..=params.max_iters {
        let (pose, _) = pose_and_jacobian(chain, &q)?;
        let error = pose_error(target, &pose)?;
        let done = error.translational.norm() < params.tol_pos
            && error.rotational.norm() < params.tol_rot;
        if done || iterations == params.max_iters {
            return Ok(Solution {
                q,
                iterations,
                converged: done,
                error,
            });
        }
        q = ctrl.cycle(chain, &q, target, params.dt_ctrl)?.q_next;
    }
    unreachable!("loop returns at max_iters")
}

/// Stateful wrapper that supplies ė by finite differences across cycles
/// when a derivative gain is set.
#[derive(Debug, Clone)]
pub struct VfdmController {
    pub params: VfdmParams,
    prev_error: Option<CartesianError>,
}

impl VfdmController {
    pub fn new(params: VfdmParams) -> Self {
        VfdmController {
            params,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.prev_error = None;
    }

    /// `cycle_dt` is the wall/simulation time between calls, used for ė.
    pub fn cycle(
        &mut self,
        chain: &SerialChain,
        q: &[f64],
        target: &Pose,
        cycle_dt: f64,
    ) -> Result<CycleOutput> {
        let p = &self.params;
        if p.kd_trans == 0.0 && p.kd_rot == 0.0 {
            return vfdm_cycle(chain, q, target, p);
        }
        let pose = crate::kinematics::forward_kinematics(chain, q)?;
        let e = pose_error(target, &pose)?;
        let e_dot = match &self.prev_error {
            Some(prev) => e.rate_from(prev, cycle_dt),
            None => CartesianError::zero(),
        };
        self.prev_error = Some(e);
        vfdm_cycle_with_rate(chain, q, target, &e_dot, p)
    }
}

/// Dense LU solve of `(H + λI) x = Jᵀ f`; independent of the Cholesky path.
#[cfg(test)]
pub(crate) fn dense_accel_oracle(chain: &SerialChain, q: &[f64], f: &Wrench, lambda: f64) -> DVector<f64> {
    let h = joint_space_inertia(chain, q).unwrap() + nalgebra::DMatrix::identity(q.len(), q.len()) * lambda;
    let j = crate::kinematics::geometric_jacobian(chain, q).unwrap();
    h.lu().solve(&(j.transpose() * wrench_vector(f))).unwrap()
}
