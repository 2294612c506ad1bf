//! Serial-chain kinematics for revolute manipulators.
//!
//! A chain is described as an ordered list of links, each carrying a fixed
//! transform from the previous joint frame and a revolute axis expressed in
//! its own joint frame (a URDF-like subset rather than DH parameters). All
//! outputs are expressed in the chain base frame.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Matrix6, Quaternion, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Rigid transform: translation plus unit quaternion.
///
/// Serialized as `{"position": [x, y, z], "orientation": [qx, qy, qz, qw]}`
/// (scalar-last).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    #[serde(default = "identity_xyzw")]
    orientation: [f64; 4],
}

fn identity_xyzw() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl TryFrom<PoseRepr> for Pose {
    type Error = String;

    fn try_from(r: PoseRepr) -> std::result::Result<Self, String> {
        let [x, y, z, w] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n.is_finite() && (n - 1.0).abs() < 1e-6) {
            return Err(format!("orientation quaternion must be unit norm (got norm {n})"));
        }
        Ok(Pose {
            position: Vector3::from(r.position),
            orientation: unit_from_parts(q),
        })
    }
}

/// Normalizes unless already unit to rounding, so serialized unit
/// quaternions read back bit-exactly.
pub(crate) fn unit_from_parts(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            position: p.position.into(),
            orientation: p.xyzw(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Pose::new(Vector3::zeros(), orientation)
    }

    /// Quaternion components in scalar-last order.
    pub fn xyzw(&self) -> [f64; 4] {
        let c = self.orientation.coords;
        [c.x, c.y, c.z, c.w]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`; the orientation is renormalized.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(self.orientation * other.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }
}

pub(crate) fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// One revolute link of a serial chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainLinkRepr", into = "ChainLinkRepr")]
pub struct ChainLink {
    /// Fixed transform from the parent joint frame to this joint frame.
    pub parent_transform: Pose,
    /// Unit revolute axis in this joint frame.
    pub joint_axis: Unit<Vector3<f64>>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainLinkRepr {
    parent_transform: Pose,
    joint_axis: [f64; 3],
    #[serde(default)]
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    #[serde(default)]
    inertia: [[f64; 3]; 3],
}

impl TryFrom<ChainLinkRepr> for ChainLink {
    type Error = String;

    fn try_from(r: ChainLinkRepr) -> std::result::Result<Self, String> {
        let inertia = Matrix3::from_fn(|i, j| r.inertia[i][j]);
        ChainLink::new(
            r.parent_transform,
            Vector3::from(r.joint_axis),
            r.mass,
            Vector3::from(r.com),
            inertia,
        )
        .map_err(|e| e.to_string())
    }
}

impl From<ChainLink> for ChainLinkRepr {
    fn from(l: ChainLink) -> Self {
        let m = l.inertia;
        ChainLinkRepr {
            parent_transform: l.parent_transform,
            joint_axis: l.joint_axis.into_inner().into(),
            mass: l.mass,
            com: l.com.into(),
            inertia: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
        }
    }
}

impl ChainLink {
    /// Validating constructor. The axis must already be unit length (1e-12).
    pub fn new(
        parent_transform: Pose,
        joint_axis: Vector3<f64>,
        mass: f64,
        com: Vector3<f64>,
        inertia: Matrix3<f64>,
    ) -> Result<Self> {
        if (joint_axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "joint axis must be unit norm, got {}",
                joint_axis.norm()
            )));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::Contract(format!("link mass must be >= 0, got {mass}")));
        }
        let asym = (inertia - inertia.transpose()).abs().max();
        if asym > 1e-12 * inertia.abs().max().max(1.0) {
            return Err(Error::Contract("link inertia must be symmetric".into()));
        }
        let min_eig = inertia.symmetric_eigenvalues().min();
        if min_eig < -1e-12 {
            return Err(Error::Contract(format!(
                "link inertia must be positive semidefinite (min eigenvalue {min_eig})"
            )));
        }
        Ok(ChainLink {
            parent_transform,
            joint_axis: Unit::new_unchecked(joint_axis),
            mass,
            com,
            inertia,
        })
    }

    /// Massless link.
    pub fn massless(parent_transform: Pose, joint_axis: Vector3<f64>) -> Result<Self> {
        Self::new(
            parent_transform,
            joint_axis,
            0.0,
            Vector3::zeros(),
            Matrix3::zeros(),
        )
    }
}

/// Ordered base-to-tip list of revolute links plus the TCP offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SerialChainRepr", into = "SerialChainRepr")]
pub struct SerialChain {
    links: Vec<ChainLink>,
    tcp_offset: Pose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SerialChainRepr {
    links: Vec<ChainLink>,
    #[serde(default)]
    tcp_offset: Pose,
}

impl TryFrom<SerialChainRepr> for SerialChain {
    type Error = String;

    fn try_from(r: SerialChainRepr) -> std::result::Result<Self, String> {
        SerialChain::new(r.links, r.tcp_offset).map_err(|e| e.to_string())
    }
}

impl From<SerialChain> for SerialChainRepr {
    fn from(c: SerialChain) -> Self {
        SerialChainRepr {
            links: c.links,
            tcp_offset: c.tcp_offset,
        }
    }
}

/// Joint configuration and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl JointState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot: vec![0.0; n],
        }
    }
}

/// World-frame quantities of one joint at a configuration.
#[derive(Debug, Clone, Copy)]
struct JointFrame {
    /// Link frame (after the joint rotation).
    pose: Pose,
    axis: Vector3<f64>,
}

impl SerialChain {
    pub fn new(links: Vec<ChainLink>, tcp_offset: Pose) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Contract("a chain needs at least one link".into()));
        }
        Ok(SerialChain { links, tcp_offset })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn links(&self) -> &[ChainLink] {
        &self.links
    }

    pub fn links_mut(&mut self) -> &mut [ChainLink] {
        &mut self.links
    }

    pub fn tcp_offset(&self) -> &Pose {
        &self.tcp_offset
    }

    pub fn with_tcp_offset(mut self, tcp_offset: Pose) -> Self {
        self.tcp_offset = tcp_offset;
        self
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Splits into the first `j` links (TCP at link `j`'s frame) and the
    /// remaining links rooted at that frame.
    pub fn split_at(&self, j: usize) -> Result<(SerialChain, SerialChain)> {
        if j == 0 || j >= self.links.len() {
            return Err(Error::Contract(format!(
                "split index {j} must be in 1..{}",
                self.links.len()
            )));
        }
        let head = SerialChain::new(self.links[..j].to_vec(), Pose::identity())?;
        let tail = SerialChain::new(self.links[j..].to_vec(), self.tcp_offset)?;
        Ok((head, tail))
    }

    fn frames(&self, q: &[f64]) -> Result<(Vec<JointFrame>, Pose)> {
        check_len(self.dof(), q.len())?;
        let mut t = Pose::identity();
        let mut frames = Vec::with_capacity(self.dof());
        for (link, &angle) in self.links.iter().zip(q) {
            t = t.compose(&link.parent_transform);
            let axis = t.orientation * link.joint_axis.into_inner();
            t = t.compose(&Pose::from_rotation(UnitQuaternion::from_axis_angle(
                &link.joint_axis,
                angle,
            )));
            frames.push(JointFrame { pose: t, axis });
        }
        let tcp = t.compose(&self.tcp_offset);
        Ok((frames, tcp))
    }
}

/// TCP pose in the base frame.
pub fn forward_kinematics(chain: &SerialChain, q: &[f64]) -> Result<Pose> {
    chain.frames(q).map(|(_, tcp)| tcp)
}

/// 6×N geometric Jacobian of the TCP, base frame, linear rows first.
pub fn geometric_jacobian(chain: &SerialChain, q: &[f64]) -> Result<DMatrix<f64>> {
    let (frames, tcp) = chain.frames(q)?;
    let mut jac = DMatrix::zeros(6, chain.dof());
    for (j, f) in frames.iter().enumerate() {
        let lin = f.axis.cross(&(tcp.position - f.pose.position));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&f.axis);
    }
    Ok(jac)
}

/// FK and Jacobian from a single pass over the chain.
pub fn pose_and_jacobian(chain: &SerialChain, q: &[f64]) -> Result<(Pose, DMatrix<f64>)> {
    let (frames, tcp) = chain.frames(q)?;
    let mut jac = DMatrix::zeros(6, chain.dof());
    for (j, f) in frames.iter().enumerate() {
        let lin = f.axis.cross(&(tcp.position - f.pose.position));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&f.axis);
    }
    Ok((tcp, jac))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Spatial inertia about the base origin, (angular, linear) ordering.
fn spatial_inertia_at_origin(mass: f64, com: &Vector3<f64>, rot_inertia: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(com);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(rot_inertia - mass * cx * cx));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * cx));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-mass * cx));
    m.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    m
}

/// Joint-space inertia matrix by composite-rigid-body accumulation.
///
/// Spatial inertias are accumulated tip-to-base about the base origin; the
/// entry `H[i][j]` is `S_iᵀ · I^c_max(i,j) · S_j` where `S_k` is the unit twist
/// of joint `k`.
pub fn joint_space_inertia(chain: &SerialChain, q: &[f64]) -> Result<DMatrix<f64>> {
    let (frames, _) = chain.frames(q)?;
    let n = chain.dof();

    let twists: Vec<Vector6<f64>> = frames
        .iter()
        .map(|f| {
            let v = f.pose.position.cross(&f.axis);
            Vector6::new(f.axis.x, f.axis.y, f.axis.z, v.x, v.y, v.z)
        })
        .collect();

    let mut h = DMatrix::zeros(n, n);
    let mut composite = Matrix6::zeros();
    for k in (0..n).rev() {
        let link = &chain.links[k];
        let pose = &frames[k].pose;
        let r = pose.rotation_matrix();
        let com = pose.transform_point(&link.com);
        composite += spatial_inertia_at_origin(link.mass, &com, &(r * link.inertia * r.transpose()));

        let force = composite * twists[k];
        for i in 0..=k {
            let hik = twists[i].dot(&force);
            h[(i, k)] = hik;
            h[(k, i)] = hik;
        }
    }
    Ok(h)
}

/// Nominal joint values for the bundled 6R chain: elbow up, tool pointing down.
pub const UR10E_HOME: [f64; 6] = [0.0, -1.9, 1.9, -FRAC_PI_2, -FRAC_PI_2, 0.0];

/// Distance from the flange to the mockup center of mass on the bundled chain.
pub const MOCKUP_COM_OFFSET: f64 = 0.1;

/// Nominal UR10e-like 6R chain built from the published DH table.
///
/// The TCP sits [`MOCKUP_COM_OFFSET`] beyond the flange along the tool axis.
/// Link masses are catalog values with the mass lumped at each link frame.
pub fn ur10e_nominal() -> SerialChain {
    const D: [f64; 6] = [0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655];
    const A: [f64; 6] = [0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0];
    const ALPHA: [f64; 6] = [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2, -FRAC_PI_2, 0.0];
    const MASS: [f64; 6] = [7.369, 13.051, 3.989, 2.1, 1.98, 0.615];

    let dh = |i: usize| {
        Pose::new(
            Vector3::new(A[i], 0.0, D[i]),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), ALPHA[i]),
        )
    };
    let links = (0..6)
        .map(|i| {
            let parent = if i == 0 { Pose::identity() } else { dh(i - 1) };
            ChainLink::new(
                parent,
                Vector3::z(),
                MASS[i],
                Vector3::zeros(),
                Matrix3::identity() * 0.01 * MASS[i],
            )
            .expect("static chain is valid")
        })
        .collect();
    let tcp = dh(5).compose(&Pose::from_translation(0.0, 0.0, MOCKUP_COM_OFFSET));
    SerialChain::new(links, tcp).expect("static chain is valid")
}
