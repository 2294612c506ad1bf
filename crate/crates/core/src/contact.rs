//! Sphere-proxy contact between two mockups with a Kelvin-Voigt force law.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameTag, Wrench};
use crate::kinematics::Pose;

/// Spring-damper contact law.
///
/// Contact acts on executed poses, which trail the ODS by the tracking lag
/// (about 75 ms with default rates). A contact much shorter than that lag
/// gains energy, so the defaults give a soft contact lasting over half a
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 10.0,
            damping: 2.0,
        }
    }
}

impl ContactParams {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.stiffness > 0.0) {
            errors.push(format!("{ctx}.stiffness must be > 0"));
        }
        if !(self.damping >= 0.0) {
            errors.push(format!("{ctx}.damping must be >= 0"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub depth: f64,
    /// From body 1 toward body 2.
    pub normal: Unit<Vector3<f64>>,
    /// Midpoint of the overlap along the center line.
    pub point: Vector3<f64>,
}

/// Overlap of two spheres centered on the given poses. Touching spheres
/// report a contact with zero depth.
pub fn detect(p1: &Pose, r1: f64, p2: &Pose, r2: f64) -> Result<Option<Contact>> {
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::Contract(format!("contact radii must be > 0, got {r1} and {r2}")));
    }
    let delta = p2.position - p1.position;
    let dist = delta.norm();
    if dist == 0.0 {
        return Err(Error::DegenerateContact);
    }
    let depth = (r1 + r2) - dist;
    if depth < 0.0 {
        return Ok(None);
    }
    let normal = Unit::new_unchecked(delta / dist);
    let point = p1.position + normal.into_inner() * (r1 - 0.5 * depth);
    Ok(Some(Contact { depth, normal, point }))
}

/// Wrenches on body 1 and body 2, in R.
///
/// `rel_velocity` is `v2 − v1`; its component along the normal is negative
/// while the bodies approach. The normal force is
/// `max(0, k·depth − c·n·(v2 − v1))`, pushing body 2 along `+n` and body 1
/// along `−n`.
pub fn contact_wrench(
    depth: f64,
    normal: &Unit<Vector3<f64>>,
    rel_velocity: &Vector3<f64>,
    params: &ContactParams,
) -> (Wrench, Wrench) {
    let separation_rate = normal.dot(rel_velocity);
    let magnitude = (params.stiffness * depth.max(0.0) - params.damping * separation_rate).max(0.0);
    let f2 = normal.into_inner() * magnitude;
    (
        Wrench::new(-f2, Vector3::zeros(), FrameTag::R),
        Wrench::new(f2, Vector3::zeros(), FrameTag::R),
    )
}
