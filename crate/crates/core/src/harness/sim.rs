//! The closed emulation loop: ODS → waypoints → VFDM → servo → sensing → ODS.

use nalgebra::Vector3;

use super::config::{Pulse, ScenarioConfig, ScenarioKind};
use super::log::{Log, LogRecord, SatRecord};
use crate::contact::{contact_wrench, detect, ContactParams};
use crate::error::{Error, Result};
use crate::frames::{sat_to_tcp, tcp_to_sat, wrench_r_to_sensor, wrench_sensor_to_r, FrameTag, Twist, Wrench};
use crate::kinematics::{Pose, SerialChain};
use crate::ods::{propagate, SatelliteState, WaypointSampler};
use crate::plant::{check_safety, measure_wrench, mockup_pose, servo_step, Safety, SensorRng};
use crate::vfdm::{conditioned_chain, solve_to_convergence, VfdmController, VfdmParams};

/// An external push active over ticks `[start_tick, end_tick)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivePulse {
    pub sat: usize,
    pub start_tick: u64,
    pub end_tick: u64,
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl ActivePulse {
    fn from_script(p: &Pulse, sat: usize, dt: f64) -> Self {
        let start_tick = (p.start / dt).round() as u64;
        ActivePulse {
            sat,
            start_tick,
            end_tick: ((p.start + p.duration) / dt).round() as u64,
            force: p.force.into(),
            torque: p.torque.into(),
        }
    }

    fn active(&self, tick: u64) -> bool {
        (self.start_tick..self.end_tick).contains(&tick)
    }
}

#[derive(Debug, Clone)]
struct SatRuntime {
    chain: SerialChain,
    virtual_chain: SerialChain,
    controller: VfdmController,
    rng: SensorRng,
    /// ODS state.
    state: SatelliteState,
    /// Physical joint angles.
    q: Vec<f64>,
    /// Joint state of the virtual model, which is also the command.
    q_virtual: Vec<f64>,
    /// Zero-order-held waypoint.
    target: Pose,
    prev_act_rho: Option<Vector3<f64>>,
    stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    SafetyStop,
}

// Offline solve placing each robot on its initial waypoint.
const INIT_TOL: f64 = 1e-10;
const INIT_ITERS: usize = 100_000;
const INIT_DT_CTRL: f64 = 0.2;

/// Owns all mutable loop state. One [`Simulation::step`] is one tick.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    sats: Vec<SatRuntime>,
    sampler: WaypointSampler,
    contact: ContactParams,
    pulses: Vec<ActivePulse>,
    tick: u64,
    log: Log,
}

impl Simulation {
    /// Expects a resolved, validated config.
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let dt = config.dt_sim;
        let mut sats = Vec::with_capacity(config.satellites.len());
        for (i, sc) in config.satellites.iter().enumerate() {
            let chain = sc.chain.build();
            let virtual_chain = conditioned_chain(&chain, &config.vfdm);
            let target = sat_to_tcp(&sc.initial, sc.mapping());
            let init = VfdmParams {
                tol_pos: INIT_TOL,
                tol_rot: INIT_TOL,
                max_iters: INIT_ITERS,
                dt_ctrl: INIT_DT_CTRL,
                ..config.vfdm
            };
            let sol = solve_to_convergence(&virtual_chain, sc.home_q(), &target, &init)?;
            if !sol.converged {
                return Err(Error::Config(vec![format!(
                    "satellites[{i}]: initial pose is not reachable from home_q (residual {:.3e} m, {:.3e} rad)",
                    sol.error.translational.norm(),
                    sol.error.rotational.norm()
                )]));
            }
            let seed = config.seed ^ sc.sensor.seed.rotate_left(32);
            sats.push(SatRuntime {
                chain,
                virtual_chain,
                controller: VfdmController::new(config.vfdm),
                rng: SensorRng::new(seed, i as u64),
                state: sc.initial,
                q: sol.q.clone(),
                q_virtual: sol.q,
                target,
                prev_act_rho: None,
                stopped: false,
            });
        }
        let mut sampler = WaypointSampler::new(config.waypoint_rate)?;
        // Sample 0 is the initial target set above.
        sampler.poll(0.0);
        let pulses = config
            .force_script
            .iter()
            .map(|p| ActivePulse::from_script(p, config.sat_index(&p.sat).expect("validated"), dt))
            .collect();
        let log = Log::new(sats.iter().map(|s| s.chain.dof()).collect());
        Ok(Simulation {
            contact: config.contact_params(),
            config,
            sats,
            sampler,
            pulses,
            tick: 0,
            log,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt_sim
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.config.total_ticks()
    }

    pub fn log(&self) -> &Log {
        &self.log
    }

    pub fn into_log(self) -> Log {
        self.log
    }

    pub fn satellite_states(&self) -> Vec<SatelliteState> {
        self.sats.iter().map(|s| s.state).collect()
    }

    pub fn joint_angles(&self, sat: usize) -> &[f64] {
        &self.sats[sat].q
    }

    pub fn status(&self) -> RunStatus {
        if self.sats.iter().any(|s| s.stopped) {
            RunStatus::SafetyStop
        } else {
            RunStatus::Running
        }
    }

    pub fn pulses(&self) -> &[ActivePulse] {
        &self.pulses
    }

    pub fn vfdm_params(&self) -> &VfdmParams {
        &self.sats.first().expect("at least one satellite").controller.params
    }

    pub fn set_vfdm_params(&mut self, params: VfdmParams) {
        for s in &mut self.sats {
            s.controller.params = params;
            s.virtual_chain = conditioned_chain(&s.chain, &params);
        }
    }

    pub fn contact_params(&self) -> &ContactParams {
        &self.contact
    }

    pub fn set_contact_params(&mut self, params: ContactParams) {
        self.contact = params;
    }

    /// Starts a push on `sat` at the current tick. Equivalent to a scripted
    /// pulse with `start = tick·dt_sim`.
    pub fn apply_impulse(&mut self, sat: usize, force: Vector3<f64>, torque: Vector3<f64>, duration: f64) -> Result<ActivePulse> {
        if sat >= self.sats.len() {
            return Err(Error::Contract(format!("no satellite with index {sat}")));
        }
        if !(duration > 0.0 && duration.is_finite()) || !force.iter().chain(torque.iter()).all(|v| v.is_finite()) {
            return Err(Error::Contract("impulse needs a positive duration and finite values".into()));
        }
        let script = Pulse {
            sat: super::config::SatRef::Index(sat),
            start: self.time(),
            duration,
            force: force.into(),
            torque: torque.into(),
        };
        let pulse = ActivePulse::from_script(&script, sat, self.config.dt_sim);
        self.pulses.push(pulse);
        Ok(pulse)
    }

    /// Advances one tick and returns its record.
    pub fn step(&mut self) -> Result<&LogRecord> {
        let tick = self.tick;
        self.step_inner().map_err(|e| Error::Numerical {
            tick,
            source: Box::new(e),
        })?;
        Ok(self.log.records.last().expect("just pushed"))
    }

    fn step_inner(&mut self) -> Result<()> {
        let dt = self.config.dt_sim;
        let k = self.tick;
        let n = self.sats.len();

        // (1) executed poses and contact / applied wrenches, all in R
        let mut tcp = Vec::with_capacity(n);
        let mut act = Vec::with_capacity(n);
        let mut act_vel = Vec::with_capacity(n);
        for (s, sc) in self.sats.iter().zip(&self.config.satellites) {
            let pose = mockup_pose(&s.chain, &s.q)?;
            let in_r = tcp_to_sat(&pose, &Twist::default(), sc.mapping());
            act_vel.push(s.prev_act_rho.map_or_else(Vector3::zeros, |p| (in_r.rho - p) / dt));
            act.push(in_r);
            tcp.push(pose);
        }
        let mut applied = vec![Wrench::zero(FrameTag::R); n];
        let mut contact_depth = 0.0;
        if self.config.scenario == ScenarioKind::Collision {
            let (b1, b2) = (self.config.satellites[0].body(), self.config.satellites[1].body());
            if let Some(c) = detect(&act[0].pose(), b1.collision_radius, &act[1].pose(), b2.collision_radius)? {
                let (w1, w2) = contact_wrench(c.depth, &c.normal, &(act_vel[1] - act_vel[0]), &self.contact);
                applied[0] = applied[0].try_add(&w1)?;
                applied[1] = applied[1].try_add(&w2)?;
                contact_depth = c.depth;
            }
        }
        for p in self.pulses.iter().filter(|p| p.active(k)) {
            applied[p.sat] = applied[p.sat].try_add(&Wrench::new(p.force, p.torque, FrameTag::R))?;
        }

        // (2)–(4) sense, map to R, propagate
        let q_pre: Vec<Vec<f64>> = self.sats.iter().map(|s| s.q.clone()).collect();
        let des_pose: Vec<Pose> = self.sats.iter().map(|s| s.state.pose()).collect();
        let des_vel: Vec<Vector3<f64>> = self.sats.iter().map(|s| s.state.rho_dot).collect();
        let mut measured = Vec::with_capacity(n);
        for (i, (s, sc)) in self.sats.iter_mut().zip(&self.config.satellites).enumerate() {
            let mapping = sc.mapping();
            let at_sensor = wrench_r_to_sensor(&applied[i], &tcp[i], mapping)?;
            let reading = measure_wrench(&at_sensor, &sc.sensor, &mut s.rng)?;
            let w_r = wrench_sensor_to_r(&reading, &tcp[i], mapping)?;
            s.state = propagate(&s.state, &w_r, sc.body(), &self.config.orbit, dt)?;
            measured.push(w_r);
        }

        // (5) waypoints, zero-order held
        let t_next = (k + 1) as f64 * dt;
        if self.sampler.poll(t_next).is_some() {
            for (s, sc) in self.sats.iter_mut().zip(&self.config.satellites) {
                s.target = sat_to_tcp(&s.state, sc.mapping());
            }
        }

        // (6)–(8) controller, servo, safety
        let mut q_cmd = Vec::with_capacity(n);
        for (s, sc) in self.sats.iter_mut().zip(&self.config.satellites) {
            let out = s.controller.cycle(&s.virtual_chain, &s.q_virtual, &s.target, dt)?;
            s.q_virtual = out.q_next;
            q_cmd.push(s.q_virtual.clone());
            if !s.stopped {
                let q_next = servo_step(&s.q, &s.q_virtual, sc.servo(), dt)?;
                s.stopped = matches!(check_safety(&q_next, sc.servo()), Safety::Stop(_));
                s.q = q_next;
            }
        }

        // (9) record pre-step state of this tick
        let sats = (0..n)
            .map(|i| SatRecord {
                des_pose: des_pose[i],
                act_pose: act[i].pose(),
                des_vel: des_vel[i],
                act_vel: act_vel[i],
                wrench: measured[i],
                q: q_pre[i].clone(),
                q_cmd: q_cmd[i].clone(),
                safety_stop: self.sats[i].stopped,
            })
            .collect();
        self.log.records.push(LogRecord {
            tick: k,
            t: k as f64 * dt,
            sats,
            contact_depth,
        });
        for (s, a) in self.sats.iter_mut().zip(&act) {
            s.prev_act_rho = Some(a.rho);
        }
        self.tick += 1;
        Ok(())
    }

    /// Runs until the configured duration.
    pub fn run(mut self) -> Result<Log> {
        self.log.records.reserve(self.config.total_ticks() as usize);
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.log)
    }
}

/// Runs a scenario without live inputs.
pub fn run_scenario(config: ScenarioConfig) -> Result<Log> {
    Simulation::new(config)?.run()
}
