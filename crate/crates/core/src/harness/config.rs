//! Scenario configuration: JSON loading, default resolution and validation.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::error::{Error, Result};
use crate::frames::FrameMapping;
use crate::kinematics::{forward_kinematics, ur10e_nominal, SerialChain, UR10E_HOME};
use crate::ods::{OrbitParams, SatelliteBody, SatelliteState};
use crate::plant::{SensorParams, ServoParams};
use crate::vfdm::VfdmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    #[serde(alias = "free_float")]
    FreeFloat,
    #[serde(alias = "collision")]
    Collision,
}

impl ScenarioKind {
    pub fn satellite_count(self) -> usize {
        match self {
            ScenarioKind::FreeFloat => 1,
            ScenarioKind::Collision => 2,
        }
    }

    fn default_duration(self) -> f64 {
        match self {
            ScenarioKind::FreeFloat => 30.0,
            ScenarioKind::Collision => 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedChain {
    #[serde(rename = "ur10e_nominal")]
    Ur10eNominal,
}

/// A bundled chain by name, or a full chain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSpec {
    Named(NamedChain),
    Custom(SerialChain),
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec::Named(NamedChain::Ur10eNominal)
    }
}

impl ChainSpec {
    pub fn build(&self) -> SerialChain {
        match self {
            ChainSpec::Named(NamedChain::Ur10eNominal) => ur10e_nominal(),
            ChainSpec::Custom(c) => c.clone(),
        }
    }
}

/// A satellite by position in `satellites` or by body name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SatRef {
    Index(usize),
    Name(String),
}

/// External push on one satellite, forces in R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub sat: SatRef,
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub torque: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<SatelliteBody>,
    #[serde(default)]
    pub initial: SatelliteState,
    #[serde(default)]
    pub chain: ChainSpec,
    /// Starting guess for the initial joint solve; also where `lab_from_R`
    /// is anchored when no mapping is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<FrameMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub servo: Option<ServoParams>,
    #[serde(default)]
    pub sensor: SensorParams,
}

impl SatelliteConfig {
    pub fn at(initial: SatelliteState) -> Self {
        SatelliteConfig {
            body: None,
            initial,
            chain: ChainSpec::default(),
            home_q: None,
            mapping: None,
            servo: None,
            sensor: SensorParams::default(),
        }
    }

    // Accessors for resolved configs.
    pub fn body(&self) -> &SatelliteBody {
        self.body.as_ref().expect("resolved config")
    }

    pub fn home_q(&self) -> &[f64] {
        self.home_q.as_deref().expect("resolved config")
    }

    pub fn mapping(&self) -> &FrameMapping {
        self.mapping.as_ref().expect("resolved config")
    }

    pub fn servo(&self) -> &ServoParams {
        self.servo.as_ref().expect("resolved config")
    }
}

pub const DEFAULT_DT_SIM: f64 = 1e-3;
pub const DEFAULT_WAYPOINT_RATE: f64 = 100.0;
/// Closing speed of each satellite in the default collision, m/s.
pub const COLLISION_SPEED: f64 = 0.05;
/// Initial center offset of each satellite from the R origin, m.
pub const COLLISION_OFFSET: f64 = 0.4;

fn default_dt_sim() -> f64 {
    DEFAULT_DT_SIM
}

fn default_waypoint_rate() -> f64 {
    DEFAULT_WAYPOINT_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    #[serde(default = "default_waypoint_rate")]
    pub waypoint_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub orbit: OrbitParams,
    #[serde(default)]
    pub satellites: Vec<SatelliteConfig>,
    #[serde(default)]
    pub vfdm: VfdmParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactParams>,
    #[serde(default)]
    pub force_script: Vec<Pulse>,
}

impl ScenarioConfig {
    /// A scenario with every default filled in.
    pub fn preset(scenario: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario,
            duration: None,
            dt_sim: DEFAULT_DT_SIM,
            waypoint_rate: DEFAULT_WAYPOINT_RATE,
            seed: 0,
            orbit: OrbitParams::default(),
            satellites: Vec::new(),
            vfdm: VfdmParams::default(),
            contact: None,
            force_script: Vec::new(),
        }
        .resolve()
        .expect("built-in presets resolve")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let cfg = raw.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.scenario.default_duration())
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration() / self.dt_sim).round() as u64
    }

    pub fn contact_params(&self) -> ContactParams {
        self.contact.unwrap_or_default()
    }

    /// Index of the satellite a reference names.
    pub fn sat_index(&self, r: &SatRef) -> Option<usize> {
        match r {
            SatRef::Index(i) => (*i < self.satellites.len()).then_some(*i),
            SatRef::Name(n) => self.satellites.iter().position(|s| s.body.as_ref().is_some_and(|b| &b.name == n)),
        }
    }

    /// Fills every optional field. Idempotent.
    pub fn resolve(mut self) -> Result<Self> {
        if self.duration.is_none() {
            self.duration = Some(self.scenario.default_duration());
        }
        if self.satellites.is_empty() {
            self.satellites = match self.scenario {
                ScenarioKind::FreeFloat => vec![SatelliteConfig::at(SatelliteState::default())],
                ScenarioKind::Collision => [-1.0, 1.0]
                    .iter()
                    .map(|&side: &f64| {
                        let mut s = SatelliteState::at_rest(Vector3::new(side * COLLISION_OFFSET, 0.0, 0.0));
                        s.rho_dot = Vector3::new(-side * COLLISION_SPEED, 0.0, 0.0);
                        SatelliteConfig::at(s)
                    })
                    .collect(),
            };
        }
        if self.scenario == ScenarioKind::Collision && self.contact.is_none() {
            self.contact = Some(ContactParams::default());
        }
        for (i, sat) in self.satellites.iter_mut().enumerate() {
            let chain = sat.chain.build();
            let dof = chain.dof();
            sat.body.get_or_insert_with(|| SatelliteBody::cubesat_4u(format!("sat{}", i + 1)));
            if sat.home_q.is_none() {
                sat.home_q = Some(if dof == UR10E_HOME.len() {
                    UR10E_HOME.to_vec()
                } else {
                    vec![0.0; dof]
                });
            }
            if sat.servo.is_none() {
                sat.servo = Some(ServoParams::with_limits(dof, -std::f64::consts::TAU, std::f64::consts::TAU));
            }
            if sat.mapping.is_none() {
                let home = sat.home_q.as_deref().unwrap_or_default();
                let anchor = forward_kinematics(&chain, home).map_err(|e| {
                    Error::Config(vec![format!("satellites[{i}].home_q: {e}")])
                })?;
                sat.mapping = Some(FrameMapping::new(anchor));
            }
        }
        Ok(self)
    }

    /// Checks every invariant of a resolved config and lists all violations.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dt_sim) {
            errors.push("dt_sim must be > 0".to_string());
        }
        if !positive(self.duration()) {
            errors.push("duration must be > 0".to_string());
        }
        if !positive(self.waypoint_rate) {
            errors.push("waypoint_rate must be > 0".to_string());
        } else if self.waypoint_rate * self.dt_sim > 1.0 + 1e-12 {
            errors.push(format!(
                "waypoint_rate * dt_sim must be <= 1 (got {})",
                self.waypoint_rate * self.dt_sim
            ));
        }
        let want = self.scenario.satellite_count();
        if self.satellites.len() != want {
            errors.push(format!(
                "{:?} requires exactly {want} satellite(s), got {}",
                self.scenario,
                self.satellites.len()
            ));
        }
        self.orbit.validate(&mut errors, "orbit");
        self.vfdm.validate(&mut errors, "vfdm");
        match (self.scenario, &self.contact) {
            (ScenarioKind::Collision, Some(c)) => c.validate(&mut errors, "contact"),
            (ScenarioKind::FreeFloat, Some(_)) => errors.push("contact is only valid for COLLISION".to_string()),
            _ => {}
        }
        let mut names: Vec<&str> = Vec::new();
        for (i, sat) in self.satellites.iter().enumerate() {
            let ctx = format!("satellites[{i}]");
            let dof = sat.chain.build().dof();
            match &sat.body {
                Some(b) => {
                    b.validate(&mut errors, &format!("{ctx}.body"));
                    if names.contains(&b.name.as_str()) {
                        errors.push(format!("{ctx}.body.name '{}' is not unique", b.name));
                    }
                    names.push(&b.name);
                }
                None => errors.push(format!("{ctx}.body is missing")),
            }
            let s = &sat.initial;
            if !(s.rho.iter().chain(s.rho_dot.iter()).chain(s.omega_body.iter()).all(|v| v.is_finite())) {
                errors.push(format!("{ctx}.initial must be finite"));
            }
            if let Some(m) = &sat.mapping {
                m.validate(&mut errors, &format!("{ctx}.mapping"));
            }
            if let Some(servo) = &sat.servo {
                servo.validate(dof, &mut errors, &format!("{ctx}.servo"));
                if let Some(h) = &sat.home_q {
                    if h.len() != dof {
                        errors.push(format!("{ctx}.home_q must have {dof} entries"));
                    } else if h
                        .iter()
                        .zip(servo.q_min.iter().zip(&servo.q_max))
                        .any(|(v, (lo, hi))| !(v > lo && v < hi))
                    {
                        errors.push(format!("{ctx}.home_q must lie strictly inside the servo limits"));
                    }
                }
            }
            sat.sensor.validate(&mut errors, &format!("{ctx}.sensor"));
        }
        if self.scenario == ScenarioKind::Collision
            && self.satellites.len() == 2
            && self.satellites[0].initial.rho == self.satellites[1].initial.rho
        {
            errors.push("collision satellites must start at distinct positions".to_string());
        }
        for (i, p) in self.force_script.iter().enumerate() {
            let ctx = format!("force_script[{i}]");
            if self.sat_index(&p.sat).is_none() {
                errors.push(format!("{ctx}.sat does not name a satellite"));
            }
            if !(p.start >= 0.0 && p.start.is_finite()) {
                errors.push(format!("{ctx}.start must be >= 0"));
            }
            if !positive(p.duration) {
                errors.push(format!("{ctx}.duration must be > 0"));
            }
            if !p.force.iter().chain(&p.torque).all(|v| v.is_finite()) {
                errors.push(format!("{ctx} force and torque must be finite"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_config(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, config.to_json() + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;

    #[test]
    fn minimal_free_float_gets_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"scenario": "FREE_FLOAT"}"#).unwrap();
        assert_eq!(cfg.vfdm, VfdmParams::default());
        assert_eq!(cfg.vfdm.kp_trans, 10.0);
        assert_eq!(cfg.orbit, OrbitParams::default());
        assert_eq!(cfg.satellites.len(), 1);
        assert_eq!(cfg.dt_sim, 1e-3);
        assert_eq!(cfg.waypoint_rate, 100.0);
        assert!(cfg.contact.is_none());
        let sat = &cfg.satellites[0];
        assert_eq!(sat.body().mass, 1.0);
        assert_eq!(sat.home_q(), &UR10E_HOME[..]);
        assert_eq!(
            sat.mapping().lab_from_r,
            forward_kinematics(&ur10e_nominal(), &UR10E_HOME).unwrap()
        );
    }

    #[test]
    fn lowercase_scenario_names_accepted() {
        let cfg = ScenarioConfig::from_json(r#"{"scenario": "collision"}"#).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Collision);
        assert_eq!(cfg.satellites.len(), 2);
        assert_eq!(cfg.satellites[0].initial.rho_dot.x, COLLISION_SPEED);
        assert_eq!(cfg.satellites[1].initial.rho_dot.x, -COLLISION_SPEED);
        assert_eq!(cfg.contact, Some(ContactParams::default()));
    }

    #[test]
    fn collision_with_one_satellite_rejected() {
        let err = ScenarioConfig::from_json(r#"{"scenario": "COLLISION", "satellites": [{}]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("exactly 2 satellite"), "{msg}");
    }

    #[test]
    fn violations_listed_exhaustively() {
        let text = r#"{
            "scenario": "FREE_FLOAT",
            "dt_sim": 0.02,
            "waypoint_rate": 100,
            "vfdm": {"m_e": 0},
            "force_script": [{"sat": 3, "start": -1, "duration": 0}]
        }"#;
        let Err(Error::Config(list)) = ScenarioConfig::from_json(text) else {
            panic!("expected a config error");
        };
        for needle in ["waypoint_rate", "m_e", "sat does not name", "start", "duration"] {
            assert!(list.iter().any(|m| m.contains(needle)), "missing {needle} in {list:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = ScenarioConfig::from_json("{\n  \"scenario\": \"FREE_FLOAT\",\n  \"speed\": 3\n}").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse(_)));
        assert!(msg.contains("speed") && msg.contains("line 3"), "{msg}");

        let nested = ScenarioConfig::from_json(r#"{"scenario": "FREE_FLOAT", "vfdm": {"kp": 1}}"#).unwrap_err();
        assert!(nested.to_string().contains("kp"));
    }

    #[test]
    fn contact_rejected_for_free_float() {
        let err = ScenarioConfig::from_json(r#"{"scenario": "FREE_FLOAT", "contact": {"stiffness": 10}}"#).unwrap_err();
        assert!(err.to_string().contains("contact"));
    }

    #[test]
    fn round_trip_is_exact() {
        for kind in [ScenarioKind::FreeFloat, ScenarioKind::Collision] {
            let mut cfg = ScenarioConfig::preset(kind);
            cfg.force_script.push(Pulse {
                sat: SatRef::Name("sat1".into()),
                start: 1.25,
                duration: 0.5,
                force: [2.0, 0.0, -0.1],
                torque: [0.0; 3],
            });
            cfg.satellites[0].sensor = SensorParams::noisy();
            let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cfg = ScenarioConfig::preset(ScenarioKind::Collision);
        save_config(&cfg, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
    }

    #[test]
    fn custom_chain_accepted() {
        let chain = crate::kinematics::fixtures::planar_2r();
        let mut cfg = ScenarioConfig::preset(ScenarioKind::FreeFloat);
        cfg.satellites = vec![SatelliteConfig {
            chain: ChainSpec::Custom(chain.clone()),
            ..SatelliteConfig::at(SatelliteState::default())
        }];
        let back = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back.satellites[0].chain.build(), chain);
        assert_eq!(back.satellites[0].home_q(), &[0.0, 0.0]);
        assert_eq!(back.satellites[0].mapping().lab_from_r, Pose::from_translation(2.0, 0.0, 0.0));
    }

    #[test]
    fn sat_refs() {
        let cfg = ScenarioConfig::preset(ScenarioKind::Collision);
        assert_eq!(cfg.sat_index(&SatRef::Index(1)), Some(1));
        assert_eq!(cfg.sat_index(&SatRef::Index(2)), None);
        assert_eq!(cfg.sat_index(&SatRef::Name("sat2".into())), Some(1));
        assert_eq!(cfg.sat_index(&SatRef::Name("nope".into())), None);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_config("/nonexistent/x.json"), Err(Error::Io(_))));
    }
}
