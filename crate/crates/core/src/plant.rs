//! Simulated position-controlled robot: first-order rate-limited joint servo,
//! a noisy F/T sensor and joint-limit safety stop.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameTag, Wrench};
use crate::kinematics::{forward_kinematics, Pose, SerialChain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoParams {
    /// First-order tracking time constant, s.
    pub time_constant: f64,
    /// Per-joint rate limit, rad/s.
    pub qdot_max: f64,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

impl Default for ServoParams {
    fn default() -> Self {
        ServoParams::with_limits(6, -TAU, TAU)
    }
}

impl ServoParams {
    pub fn with_limits(dof: usize, lo: f64, hi: f64) -> Self {
        ServoParams {
            time_constant: 0.02,
            qdot_max: 2.0,
            q_min: vec![lo; dof],
            q_max: vec![hi; dof],
        }
    }

    pub fn validate(&self, dof: usize, errors: &mut Vec<String>, ctx: &str) {
        if !(self.time_constant > 0.0) {
            errors.push(format!("{ctx}.time_constant must be > 0"));
        }
        if !(self.qdot_max > 0.0) {
            errors.push(format!("{ctx}.qdot_max must be > 0"));
        }
        if self.q_min.len() != dof || self.q_max.len() != dof {
            errors.push(format!("{ctx}.q_min/q_max must have {dof} entries"));
        } else if self.q_min.iter().zip(&self.q_max).any(|(lo, hi)| !(lo < hi)) {
            errors.push(format!("{ctx}.q_min must be < q_max for every joint"));
        }
    }
}

/// `q + clamp((q_cmd − q)/τ, ±q̇_max)·dt`, then clamped to the joint limits.
pub fn servo_step(q: &[f64], q_cmd: &[f64], params: &ServoParams, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("servo step must be > 0, got {dt}")));
    }
    crate::error::check_len(q.len(), q_cmd.len())?;
    crate::error::check_len(q.len(), params.q_min.len())?;
    Ok(q.iter()
        .zip(q_cmd)
        .enumerate()
        .map(|(i, (&qi, &ci))| {
            let rate = ((ci - qi) / params.time_constant).clamp(-params.qdot_max, params.qdot_max);
            (qi + rate * dt).clamp(params.q_min[i], params.q_max[i])
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Safety {
    Ok,
    /// Zero-based index of the first joint at a limit.
    Stop(usize),
}

/// Reports a stop when any joint is within 1e-9 rad of a limit.
pub fn check_safety(q: &[f64], params: &ServoParams) -> Safety {
    const MARGIN: f64 = 1e-9;
    q.iter()
        .zip(params.q_min.iter().zip(&params.q_max))
        .position(|(&v, (&lo, &hi))| v <= lo + MARGIN || v >= hi - MARGIN)
        .map_or(Safety::Ok, Safety::Stop)
}

/// TCP (mockup center of mass) pose of the physical robot.
pub fn mockup_pose(chain: &SerialChain, q: &[f64]) -> Result<Pose> {
    forward_kinematics(chain, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorParams {
    pub noise_sigma_force: f64,
    pub noise_sigma_torque: f64,
    /// Constant offset, `[fx, fy, fz, tx, ty, tz]` in the sensor frame.
    pub bias: [f64; 6],
    /// Seed for this sensor's noise stream; combined with the scenario seed.
    pub seed: u64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            noise_sigma_force: 0.0,
            noise_sigma_torque: 0.0,
            bias: [0.0; 6],
            seed: 0,
        }
    }
}

impl SensorParams {
    /// Force/torque noise typical of a flange-mounted F/T sensor.
    pub fn noisy() -> Self {
        SensorParams {
            noise_sigma_force: 0.1,
            noise_sigma_torque: 0.005,
            ..Self::default()
        }
    }

    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.noise_sigma_force >= 0.0 && self.noise_sigma_torque >= 0.0) {
            errors.push(format!("{ctx}.noise sigmas must be >= 0"));
        }
    }

    fn bias_wrench(&self) -> (Vector3<f64>, Vector3<f64>) {
        let b = self.bias;
        (Vector3::new(b[0], b[1], b[2]), Vector3::new(b[3], b[4], b[5]))
    }
}

/// Per-sensor noise stream. Deterministic given the seed and call sequence.
#[derive(Debug, Clone)]
pub struct SensorRng {
    rng: ChaCha8Rng,
    calls: u64,
}

impl SensorRng {
    /// Independent stream `stream` of the generator seeded with `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SensorRng { rng, calls: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    fn normal3(&mut self, sigma: f64) -> Vector3<f64> {
        let mut draw = || -> f64 { StandardNormal.sample(&mut self.rng) };
        let v = Vector3::new(draw(), draw(), draw());
        v * sigma
    }
}

/// True wrench plus bias plus independent Gaussian noise on every axis.
///
/// Six normal deviates are drawn per call regardless of the sigmas, so
/// changing a sigma never shifts the stream.
pub fn measure_wrench(true_wrench: &Wrench, params: &SensorParams, rng: &mut SensorRng) -> Result<Wrench> {
    true_wrench.expect_frame(FrameTag::Sensor)?;
    let nf = rng.normal3(params.noise_sigma_force);
    let nt = rng.normal3(params.noise_sigma_torque);
    rng.calls += 1;
    let (bf, bt) = params.bias_wrench();
    Ok(Wrench::new(
        true_wrench.force + bf + nf,
        true_wrench.torque + bt + nt,
        FrameTag::Sensor,
    ))
}
