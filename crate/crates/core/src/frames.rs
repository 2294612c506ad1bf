//! Frame transformations between the orbital frame R and the robot TCP.
//!
//! Each robot has its own lab frame (its base) and a fixed `lab_from_R`
//! transform placing the R origin inside its workspace. Measured torques
//! are divided by `torque_scale` on the way into R; commanded motion out of
//! R is not rescaled.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{renormalize, Pose};
use crate::ods::SatelliteState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrameTag {
    Sensor,
    Lab,
    R,
    Task,
}

/// Force and torque tagged with the frame they are expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: FrameTag,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>, frame: FrameTag) -> Self {
        Wrench {
            force,
            torque,
            frame,
        }
    }

    pub fn zero(frame: FrameTag) -> Self {
        Wrench::new(Vector3::zeros(), Vector3::zeros(), frame)
    }

    pub fn expect_frame(&self, expected: FrameTag) -> Result<()> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected,
                actual: self.frame,
            })
        }
    }

    /// Sum of two wrenches in the same frame.
    pub fn try_add(&self, other: &Wrench) -> Result<Wrench> {
        other.expect_frame(self.frame)?;
        Ok(Wrench::new(
            self.force + other.force,
            self.torque + other.torque,
            self.frame,
        ))
    }

    pub fn negated(&self) -> Wrench {
        Wrench::new(-self.force, -self.torque, self.frame)
    }

    pub fn magnitude(&self) -> f64 {
        self.force.norm()
    }
}

/// Linear and angular velocity of the TCP in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMapping {
    #[serde(rename = "lab_from_R")]
    pub lab_from_r: Pose,
    /// Orbit meters per lab meter.
    #[serde(default = "one")]
    pub position_scale: f64,
    /// Divisor applied to measured torques.
    #[serde(default = "default_torque_scale")]
    pub torque_scale: f64,
    /// Sensor frame expressed in the TCP frame (identity: sensor at the TCP).
    #[serde(default, skip_serializing_if = "is_identity")]
    pub tcp_from_sensor: Pose,
}

fn one() -> f64 {
    1.0
}

pub const DEFAULT_TORQUE_SCALE: f64 = 2000.0;

fn default_torque_scale() -> f64 {
    DEFAULT_TORQUE_SCALE
}

fn is_identity(p: &Pose) -> bool {
    *p == Pose::identity()
}

impl Default for FrameMapping {
    fn default() -> Self {
        FrameMapping::new(Pose::identity())
    }
}

impl FrameMapping {
    pub fn new(lab_from_r: Pose) -> Self {
        FrameMapping {
            lab_from_r,
            position_scale: 1.0,
            torque_scale: DEFAULT_TORQUE_SCALE,
            tcp_from_sensor: Pose::identity(),
        }
    }

    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.position_scale > 0.0 && self.position_scale.is_finite()) {
            errors.push(format!("{ctx}.position_scale must be > 0"));
        }
        if !(self.torque_scale >= 1.0 && self.torque_scale.is_finite()) {
            errors.push(format!("{ctx}.torque_scale must be >= 1"));
        }
    }
}

/// Satellite pose in R mapped to the TCP pose in the lab frame.
pub fn sat_to_tcp(state: &SatelliteState, mapping: &FrameMapping) -> Pose {
    let scaled = Pose::new(state.rho / mapping.position_scale, state.eps);
    mapping.lab_from_r.compose(&scaled)
}

/// Satellite rates mapped to the TCP twist in the lab frame.
pub fn sat_twist_to_lab(state: &SatelliteState, mapping: &FrameMapping) -> Twist {
    let rot = mapping.lab_from_r.orientation;
    Twist {
        linear: rot * (state.rho_dot / mapping.position_scale),
        angular: rot * (state.eps * state.omega_body),
    }
}

/// Inverse of [`sat_to_tcp`] / [`sat_twist_to_lab`]: TCP pose and twist in
/// the lab back to a satellite state in R.
pub fn tcp_to_sat(pose: &Pose, twist: &Twist, mapping: &FrameMapping) -> SatelliteState {
    let r_from_lab = mapping.lab_from_r.inverse();
    let in_r = r_from_lab.compose(pose);
    let rot = r_from_lab.orientation;
    let eps = in_r.orientation;
    SatelliteState {
        rho: in_r.position * mapping.position_scale,
        rho_dot: rot * twist.linear * mapping.position_scale,
        eps,
        omega_body: eps.inverse() * (rot * twist.angular),
    }
}

/// Re-expresses a sensor reading in R: force and torque rotated into R axes
/// (torque taken about the TCP), then the torque divided by `torque_scale`.
pub fn wrench_sensor_to_r(w: &Wrench, tcp_pose: &Pose, mapping: &FrameMapping) -> Result<Wrench> {
    w.expect_frame(FrameTag::Sensor)?;
    let s = &mapping.tcp_from_sensor;
    let f_tcp = s.orientation * w.force;
    let t_tcp = s.orientation * w.torque + s.position.cross(&f_tcp);
    let to_r = renormalize(mapping.lab_from_r.orientation.inverse() * tcp_pose.orientation);
    Ok(Wrench::new(
        to_r * f_tcp,
        (to_r * t_tcp) / mapping.torque_scale,
        FrameTag::R,
    ))
}

/// Physical wrench acting at the TCP, given in R axes, as the sensor would
/// see it. No torque scaling; this models the measurement, not the ODS input.
pub fn wrench_r_to_sensor(w: &Wrench, tcp_pose: &Pose, mapping: &FrameMapping) -> Result<Wrench> {
    w.expect_frame(FrameTag::R)?;
    let s = &mapping.tcp_from_sensor;
    let tcp_from_r = renormalize(tcp_pose.orientation.inverse() * mapping.lab_from_r.orientation);
    let f_tcp = tcp_from_r * w.force;
    let t_tcp = tcp_from_r * w.torque;
    Ok(Wrench::new(
        s.orientation.inverse() * f_tcp,
        s.orientation.inverse() * (t_tcp - s.position.cross(&f_tcp)),
        FrameTag::Sensor,
    ))
}
