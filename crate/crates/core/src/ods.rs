//! Orbital dynamics: Clohessy-Wiltshire relative translation in the rotating
//! frame R plus rigid-body attitude (Euler equations and quaternion
//! kinematics), integrated together with fixed-step RK4.
//!
//! Frame R: origin at the virtual observer on a circular orbit, `x` radial
//! (away from Earth), `y` along-track, `z` along the orbital angular momentum.
//! The attitude quaternion maps body to R and is stored scalar-last; the
//! body rate is expressed in body axes.

use nalgebra::{Matrix3, Quaternion, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameMapping, FrameTag, Wrench};
use crate::kinematics::Pose;

/// Standard gravitational parameter of the Earth, m³/s².
pub const EARTH_MU: f64 = 3.986_004_418e14;
/// Equatorial radius of the Earth, m.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Default observer altitude, m.
pub const DEFAULT_ALTITUDE: f64 = 800_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitParams {
    pub mu: f64,
    /// Radius of the observer's circular orbit, m.
    pub a: f64,
    /// Adds the gravity-gradient torque to the attitude dynamics.
    #[serde(default)]
    pub gravity_gradient: bool,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams::from_altitude(DEFAULT_ALTITUDE)
    }
}

impl OrbitParams {
    pub fn from_altitude(altitude: f64) -> Self {
        OrbitParams {
            mu: EARTH_MU,
            a: EARTH_RADIUS + altitude,
            gravity_gradient: false,
        }
    }

    /// Orbital angular rate sqrt(μ/a³).
    pub fn omega(&self) -> f64 {
        (self.mu / (self.a * self.a * self.a)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega()
    }

    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            errors.push(format!("{ctx}.mu must be > 0"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            errors.push(format!("{ctx}.a must be > 0"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteBody {
    pub name: String,
    pub mass: f64,
    /// Principal moments (I1, I2, I3), kg·m².
    pub inertia_principal: [f64; 3],
    /// Radius of the sphere proxy used for contact, m.
    pub collision_radius: f64,
}

impl SatelliteBody {
    /// Uniform-density 1 kg 4U CubeSat in a 2×2 layout, 0.2 × 0.2 × 0.1 m.
    pub fn cubesat_4u(name: impl Into<String>) -> Self {
        let (mass, dx, dy, dz) = (1.0, 0.2, 0.2, 0.1);
        let box_moment = |a: f64, b: f64| mass * (a * a + b * b) / 12.0;
        SatelliteBody {
            name: name.into(),
            mass,
            inertia_principal: [box_moment(dy, dz), box_moment(dx, dz), box_moment(dx, dy)],
            collision_radius: 0.5 * (dx * dx + dy * dy + dz * dz).sqrt(),
        }
    }

    pub fn inertia(&self) -> Vector3<f64> {
        Vector3::from(self.inertia_principal)
    }

    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            errors.push(format!("{ctx}.mass must be > 0"));
        }
        let [i1, i2, i3] = self.inertia_principal;
        if !(i1 > 0.0 && i2 > 0.0 && i3 > 0.0) {
            errors.push(format!("{ctx}.inertia_principal entries must be > 0"));
        } else if i1 + i2 < i3 || i2 + i3 < i1 || i3 + i1 < i2 {
            errors.push(format!(
                "{ctx}.inertia_principal violates the triangle inequality"
            ));
        }
        if !(self.collision_radius > 0.0) {
            errors.push(format!("{ctx}.collision_radius must be > 0"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct SatelliteState {
    pub rho: Vector3<f64>,
    pub rho_dot: Vector3<f64>,
    /// Body-to-R attitude.
    pub eps: UnitQuaternion<f64>,
    /// Body angular rate in body axes, rad/s.
    pub omega_body: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRepr {
    #[serde(default)]
    rho: [f64; 3],
    #[serde(default)]
    rho_dot: [f64; 3],
    #[serde(default = "identity_xyzw")]
    eps: [f64; 4],
    #[serde(default)]
    omega_body: [f64; 3],
}

fn identity_xyzw() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl TryFrom<StateRepr> for SatelliteState {
    type Error = String;

    fn try_from(r: StateRepr) -> std::result::Result<Self, String> {
        let [x, y, z, w] = r.eps;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("eps must be a unit quaternion (norm {})", q.norm()));
        }
        Ok(SatelliteState {
            rho: r.rho.into(),
            rho_dot: r.rho_dot.into(),
            eps: crate::kinematics::unit_from_parts(q),
            omega_body: r.omega_body.into(),
        })
    }
}

impl From<SatelliteState> for StateRepr {
    fn from(s: SatelliteState) -> Self {
        let c = s.eps.coords;
        StateRepr {
            rho: s.rho.into(),
            rho_dot: s.rho_dot.into(),
            eps: [c.x, c.y, c.z, c.w],
            omega_body: s.omega_body.into(),
        }
    }
}

impl Default for SatelliteState {
    fn default() -> Self {
        SatelliteState::at_rest(Vector3::zeros())
    }
}

impl SatelliteState {
    pub fn at_rest(rho: Vector3<f64>) -> Self {
        SatelliteState {
            rho,
            rho_dot: Vector3::zeros(),
            eps: UnitQuaternion::identity(),
            omega_body: Vector3::zeros(),
        }
    }

    /// Pose of the body in R.
    pub fn pose(&self) -> Pose {
        Pose::new(self.rho, self.eps)
    }

    pub fn translational(&self) -> TranslationalState {
        TranslationalState {
            rho: self.rho,
            rho_dot: self.rho_dot,
        }
    }
}

/// Position and velocity in R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationalState {
    pub rho: Vector3<f64>,
    pub rho_dot: Vector3<f64>,
}

/// Translational acceleration in R under the CW equations.
pub fn cw_acceleration(
    state: &SatelliteState,
    wrench_r: &Wrench,
    params: &OrbitParams,
    mass: f64,
) -> Result<Vector3<f64>> {
    wrench_r.expect_frame(FrameTag::R)?;
    Ok(cw_accel(
        &state.rho,
        &state.rho_dot,
        &wrench_r.force,
        params.omega(),
        mass,
    ))
}

fn cw_accel(
    rho: &Vector3<f64>,
    rho_dot: &Vector3<f64>,
    force: &Vector3<f64>,
    omega: f64,
    mass: f64,
) -> Vector3<f64> {
    let w2 = omega * omega;
    Vector3::new(
        3.0 * w2 * rho.x + 2.0 * omega * rho_dot.y + force.x / mass,
        -2.0 * omega * rho_dot.x + force.y / mass,
        -w2 * rho.z + force.z / mass,
    )
}

/// Euler's equations for a body in principal axes,
/// `I₁ω̇₁ = (I₂ − I₃)ω₂ω₃ + T₁` and cyclic.
pub fn attitude_rates(
    omega_body: &Vector3<f64>,
    torque_body: &Vector3<f64>,
    body: &SatelliteBody,
) -> Vector3<f64> {
    euler_rates(omega_body, torque_body, &body.inertia())
}

fn euler_rates(w: &Vector3<f64>, t: &Vector3<f64>, i: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        (i.y - i.z) / i.x * w.y * w.z + t.x / i.x,
        (i.z - i.x) / i.y * w.x * w.z + t.y / i.y,
        (i.x - i.y) / i.z * w.x * w.y + t.z / i.z,
    )
}

/// Quaternion rate, scalar-last components `(ẋ, ẏ, ż, ẇ)`.
///
/// Evaluates `½ · Q(ε) · (ω₁, ω₂, ω₃, 0)` row by row.
pub fn quat_rate(eps: &Vector4<f64>, omega_body: &Vector3<f64>) -> Vector4<f64> {
    let (x, y, z, w) = (eps[0], eps[1], eps[2], eps[3]);
    let (w1, w2, w3) = (omega_body.x, omega_body.y, omega_body.z);
    0.5 * Vector4::new(
        w * w1 - z * w2 + y * w3,
        z * w1 + w * w2 - x * w3,
        -y * w1 + x * w2 + w * w3,
        -x * w1 - y * w2 - z * w3,
    )
}

/// Rotation matrix (body to R) of a scalar-last quaternion.
pub fn quat_to_rotation(eps: &Vector4<f64>) -> Matrix3<f64> {
    let q = eps / eps.norm();
    let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub(crate) fn xyzw(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    let c = q.coords;
    Vector4::new(c.x, c.y, c.z, c.w)
}

/// Gravity-gradient torque in body axes: 3Ω² ĉ × (I ĉ) with ĉ the nadir
/// direction expressed in the body frame.
pub fn gravity_gradient_torque(rotation_body_to_r: &Matrix3<f64>, inertia: &Vector3<f64>, omega: f64) -> Vector3<f64> {
    let nadir = rotation_body_to_r.transpose() * -Vector3::x();
    let i_c = inertia.component_mul(&nadir);
    3.0 * omega * omega * nadir.cross(&i_c)
}

type State13 = SVector<f64, 13>;

struct Dynamics {
    force: Vector3<f64>,
    torque_r: Vector3<f64>,
    inertia: Vector3<f64>,
    mass: f64,
    omega: f64,
    gravity_gradient: bool,
}

impl Dynamics {
    fn derivative(&self, s: &State13) -> State13 {
        let rho = s.fixed_rows::<3>(0).into_owned();
        let rho_dot = s.fixed_rows::<3>(3).into_owned();
        let eps = s.fixed_rows::<4>(6).into_owned();
        let w = s.fixed_rows::<3>(10).into_owned();

        let c = quat_to_rotation(&eps);
        let mut torque = c.transpose() * self.torque_r;
        if self.gravity_gradient {
            torque += gravity_gradient_torque(&c, &self.inertia, self.omega);
        }

        let mut d = State13::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&rho_dot);
        d.fixed_rows_mut::<3>(3)
            .copy_from(&cw_accel(&rho, &rho_dot, &self.force, self.omega, self.mass));
        d.fixed_rows_mut::<4>(6).copy_from(&quat_rate(&eps, &w));
        d.fixed_rows_mut::<3>(10)
            .copy_from(&euler_rates(&w, &torque, &self.inertia));
        d
    }
}

fn pack(s: &SatelliteState) -> State13 {
    let mut v = State13::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&s.rho);
    v.fixed_rows_mut::<3>(3).copy_from(&s.rho_dot);
    v.fixed_rows_mut::<4>(6).copy_from(&xyzw(&s.eps));
    v.fixed_rows_mut::<3>(10).copy_from(&s.omega_body);
    v
}

/// One RK4 step. Returns the renormalized state together with the raw
/// `[x, y, z, w]` quaternion as integrated, before renormalization.
pub fn propagate_raw(
    state: &SatelliteState,
    wrench_r: &Wrench,
    body: &SatelliteBody,
    params: &OrbitParams,
    dt: f64,
) -> Result<(SatelliteState, Vector4<f64>)> {
    wrench_r.expect_frame(FrameTag::R)?;
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("propagation step must be > 0, got {dt}")));
    }
    let dynamics = Dynamics {
        force: wrench_r.force,
        torque_r: wrench_r.torque,
        inertia: body.inertia(),
        mass: body.mass,
        omega: params.omega(),
        gravity_gradient: params.gravity_gradient,
    };
    let y = pack(state);
    let k1 = dynamics.derivative(&y);
    let k2 = dynamics.derivative(&(y + k1 * (0.5 * dt)));
    let k3 = dynamics.derivative(&(y + k2 * (0.5 * dt)));
    let k4 = dynamics.derivative(&(y + k3 * dt));
    let next = y + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);

    let raw_q = next.fixed_rows::<4>(6).into_owned();
    let q = Quaternion::new(raw_q[3], raw_q[0], raw_q[1], raw_q[2]);
    let out = SatelliteState {
        rho: next.fixed_rows::<3>(0).into_owned(),
        rho_dot: next.fixed_rows::<3>(3).into_owned(),
        eps: UnitQuaternion::new_normalize(q),
        omega_body: next.fixed_rows::<3>(10).into_owned(),
    };
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("satellite state after propagation".into()));
    }
    Ok((out, raw_q))
}

/// Advances a satellite by `dt` under a wrench held constant over the step.
///
/// The wrench must be tagged `R`; its torque is rotated into body axes at
/// every RK4 stage. The quaternion is renormalized after the step.
pub fn propagate(
    state: &SatelliteState,
    wrench_r: &Wrench,
    body: &SatelliteBody,
    params: &OrbitParams,
    dt: f64,
) -> Result<SatelliteState> {
    propagate_raw(state, wrench_r, body, params, dt).map(|(s, _)| s)
}

/// Closed-form force-free CW solution at time `t`.
pub fn cw_analytic(state0: &TranslationalState, t: f64, omega: f64) -> TranslationalState {
    let TranslationalState { rho: r0, rho_dot: v0 } = *state0;
    if omega.abs() < 1e-300 {
        return TranslationalState {
            rho: r0 + v0 * t,
            rho_dot: v0,
        };
    }
    let n = omega;
    let (s, c) = (n * t).sin_cos();
    let nt = n * t;
    let rho = Vector3::new(
        (4.0 - 3.0 * c) * r0.x + s / n * v0.x + 2.0 / n * (1.0 - c) * v0.y,
        6.0 * (s - nt) * r0.x + r0.y - 2.0 / n * (1.0 - c) * v0.x + (4.0 * s - 3.0 * nt) / n * v0.y,
        r0.z * c + v0.z / n * s,
    );
    let rho_dot = Vector3::new(
        3.0 * n * s * r0.x + c * v0.x + 2.0 * s * v0.y,
        -6.0 * n * (1.0 - c) * r0.x - 2.0 * s * v0.x + (4.0 * c - 3.0) * v0.y,
        -r0.z * n * s + v0.z * c,
    );
    TranslationalState { rho, rho_dot }
}

/// A timestamped TCP target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub pose: Pose,
}

/// Uniform-in-time sampler of a simulated trajectory.
///
/// Sample `k` is due at `k / rate`; it takes the latest state whose time is
/// not after that instant.
#[derive(Debug, Clone)]
pub struct WaypointSampler {
    rate: f64,
    next: u64,
}

impl WaypointSampler {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Contract(format!("sample rate must be > 0, got {rate}")));
        }
        Ok(WaypointSampler { rate, next: 0 })
    }

    pub fn next_time(&self) -> f64 {
        self.next as f64 / self.rate
    }

    /// Returns the sample time if the sample is due at `t`.
    pub fn poll(&mut self, t: f64) -> Option<f64> {
        let due = self.next_time();
        // Absorb rounding in tick arithmetic (t = tick·dt).
        if t + 1e-9 / self.rate >= due {
            self.next += 1;
            Some(due)
        } else {
            None
        }
    }
}

/// Samples `history` (time-ordered) at `sample_rate` and maps each pose to
/// the TCP through `mapping`.
pub fn waypoint_stream(
    history: &[(f64, SatelliteState)],
    sample_rate: f64,
    mapping: &FrameMapping,
) -> Result<Vec<Waypoint>> {
    let mut sampler = WaypointSampler::new(sample_rate)?;
    let Some(&(t_end, _)) = history.last() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut idx = 0;
    loop {
        let due = sampler.next_time();
        if due > t_end + 1e-9 / sample_rate {
            break;
        }
        while idx + 1 < history.len() && history[idx + 1].0 <= due + 1e-9 / sample_rate {
            idx += 1;
        }
        sampler.poll(due);
        out.push(Waypoint {
            t: due,
            pose: crate::frames::sat_to_tcp(&history[idx].1, mapping),
        });
    }
    Ok(out)
}
