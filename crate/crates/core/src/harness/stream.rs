//! Live telemetry and command stream.
//!
//! One TCP port serves both plain newline-delimited JSON and WebSocket
//! clients; the first bytes of a connection decide which. The simulation
//! loop never blocks on clients: telemetry goes into a bounded per-client
//! queue that drops the oldest frame when full, and commands arrive through
//! a channel drained at tick boundaries.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_queue::ArrayQueue;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{SatRef, ScenarioConfig};
use super::log::Log;
use super::sim::{RunStatus, Simulation};
use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// Upper bound on telemetry frames per simulated second.
pub const MAX_FRAME_RATE: f64 = 60.0;
const CLIENT_QUEUE: usize = 256;
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Pause,
    Resume,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Impulse {
        sat: SatRef,
        #[serde(default)]
        force: [f64; 3],
        #[serde(default)]
        torque: [f64; 3],
        duration_s: f64,
    },
    Cmd {
        action: Action,
    },
    SetParam {
        path: String,
        value: f64,
    },
}

pub fn parse_command(line: &str) -> std::result::Result<Command, String> {
    serde_json::from_str(line).map_err(|e| format!("malformed command: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrenchFrame {
    pub force: [f64; 3],
    pub torque: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatFrame {
    pub name: String,
    pub des_pose: Pose,
    pub act_pose: Pose,
    pub wrench: WrenchFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Paused,
    SafetyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    State {
        tick: u64,
        t: f64,
        sats: Vec<SatFrame>,
        status: Status,
    },
    Error {
        message: String,
    },
}

impl Frame {
    pub fn error(message: impl Into<String>) -> Self {
        Frame::Error {
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

/// Latest logged state of `sim` as a telemetry frame.
pub fn state_frame(sim: &Simulation, paused: bool) -> Option<Frame> {
    let rec = sim.log().records.last()?;
    let sats = rec
        .sats
        .iter()
        .zip(&sim.config().satellites)
        .map(|(s, c)| SatFrame {
            name: c.body().name.clone(),
            des_pose: s.des_pose,
            act_pose: s.act_pose,
            wrench: WrenchFrame {
                force: s.wrench.force.into(),
                torque: s.wrench.torque.into(),
            },
        })
        .collect();
    let status = match (paused, sim.status()) {
        (true, _) => Status::Paused,
        (false, RunStatus::SafetyStop) => Status::SafetyStop,
        (false, RunStatus::Running) => Status::Running,
    };
    Some(Frame::State {
        tick: rec.tick,
        t: rec.t,
        sats,
        status,
    })
}

/// Ticks between telemetry frames so that at most [`MAX_FRAME_RATE`]
/// frames are sent per simulated second.
pub fn decimation(dt_sim: f64) -> u64 {
    ((1.0 / (MAX_FRAME_RATE * dt_sim)).ceil() as u64).max(1)
}

/// Parameters a client may change while running.
pub const SETTABLE_PARAMS: [&str; 6] = [
    "vfdm.kp_trans",
    "vfdm.kd_trans",
    "vfdm.kp_rot",
    "vfdm.kd_rot",
    "contact.stiffness",
    "contact.damping",
];

pub fn set_param(sim: &mut Simulation, path: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Contract(format!("{path} must be finite and >= 0")));
    }
    let mut vfdm = *sim.vfdm_params();
    let mut contact = *sim.contact_params();
    match path {
        "vfdm.kp_trans" => vfdm.kp_trans = value,
        "vfdm.kd_trans" => vfdm.kd_trans = value,
        "vfdm.kp_rot" => vfdm.kp_rot = value,
        "vfdm.kd_rot" => vfdm.kd_rot = value,
        "contact.stiffness" if value > 0.0 => contact.stiffness = value,
        "contact.stiffness" => return Err(Error::Contract("contact.stiffness must be > 0".into())),
        "contact.damping" => contact.damping = value,
        other => return Err(Error::Contract(format!("parameter '{other}' is not settable"))),
    }
    sim.set_vfdm_params(vfdm);
    sim.set_contact_params(contact);
    Ok(())
}

/// Applies a command at a tick boundary. `initial` is the config a reset
/// returns to.
pub fn apply_command(sim: &mut Simulation, paused: &mut bool, initial: &ScenarioConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Impulse {
            sat,
            force,
            torque,
            duration_s,
        } => {
            let idx = sim
                .config()
                .sat_index(sat)
                .ok_or_else(|| Error::Contract(format!("unknown satellite {sat:?}")))?;
            sim.apply_impulse(idx, Vector3::from(*force), Vector3::from(*torque), *duration_s)?;
        }
        Command::Cmd { action } => match action {
            Action::Pause => *paused = true,
            Action::Resume => *paused = false,
            Action::Reset => *sim = Simulation::new(initial.clone())?,
        },
        Command::SetParam { path, value } => set_param(sim, path, *value)?,
    }
    Ok(())
}

#[derive(Debug)]
struct Client {
    outbox: ArrayQueue<String>,
    closed: AtomicBool,
}

impl Client {
    fn new() -> Arc<Self> {
        Arc::new(Client {
            outbox: ArrayQueue::new(CLIENT_QUEUE),
            closed: AtomicBool::new(false),
        })
    }

    fn send(&self, line: String) {
        self.outbox.force_push(line);
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Relaxed)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
    }
}

/// A command together with the client that sent it, for error replies.
pub struct Incoming {
    pub command: Command,
    client: Arc<Client>,
}

impl Incoming {
    pub fn reply_error(&self, message: impl Into<String>) {
        self.client.send(Frame::error(message).to_line());
    }
}

pub struct StreamServer {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<Arc<Client>>>>,
    commands: Mutex<Receiver<Incoming>>,
    shutdown: Arc<AtomicBool>,
}

impl StreamServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<Arc<Client>>>> = Arc::default();
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        {
            let clients = Arc::clone(&clients);
            let shutdown = Arc::clone(&shutdown);
            thread::spawn(move || accept_loop(listener, clients, tx, shutdown));
        }
        Ok(StreamServer {
            addr,
            clients,
            commands: Mutex::new(rx),
            shutdown,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        let mut clients = self.clients.lock().expect("client list");
        clients.retain(|c| !c.is_closed());
        clients.len()
    }

    /// Queues a frame for every connected client; never blocks.
    pub fn broadcast(&self, frame: &Frame) {
        let line = frame.to_line();
        let mut clients = self.clients.lock().expect("client list");
        clients.retain(|c| !c.is_closed());
        for c in clients.iter() {
            c.send(line.clone());
        }
    }

    pub fn try_recv(&self) -> Option<Incoming> {
        self.commands.lock().expect("command queue").try_recv().ok()
    }
}

impl Drop for StreamServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        for c in self.clients.lock().expect("client list").iter() {
            c.close();
        }
    }
}

fn accept_loop(listener: TcpListener, clients: Arc<Mutex<Vec<Arc<Client>>>>, tx: Sender<Incoming>, shutdown: Arc<AtomicBool>) {
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let client = Client::new();
                clients.lock().expect("client list").push(Arc::clone(&client));
                let tx = tx.clone();
                thread::spawn(move || {
                    let _ = serve_client(stream, &client, &tx);
                    client.close();
                });
            }
            // WouldBlock, or a transient accept failure
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn handle_line(line: &str, client: &Arc<Client>, tx: &Sender<Incoming>) {
    let line = line.trim();
    if line.is_empty() {
        return;
    }
    match parse_command(line) {
        Ok(command) => {
            let _ = tx.send(Incoming {
                command,
                client: Arc::clone(client),
            });
        }
        Err(msg) => client.send(Frame::error(msg).to_line()),
    }
}

fn serve_client(stream: TcpStream, client: &Arc<Client>, tx: &Sender<Incoming>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut head = [0u8; 4];
    // Wait briefly for the first bytes; a silent client is a plain listener.
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let is_ws = matches!(stream.peek(&mut head), Ok(4) if &head == b"GET ");
    if is_ws {
        serve_websocket(stream, client, tx)
    } else {
        serve_ndjson(stream, client, tx)
    }
}

fn serve_ndjson(stream: TcpStream, client: &Arc<Client>, tx: &Sender<Incoming>) -> std::io::Result<()> {
    stream.set_read_timeout(None)?;
    let reader_stream = stream.try_clone()?;
    let reader_client = Arc::clone(client);
    let tx = tx.clone();
    thread::spawn(move || {
        for line in BufReader::new(reader_stream).lines() {
            match line {
                Ok(l) => handle_line(&l, &reader_client, &tx),
                Err(_) => break,
            }
        }
        reader_client.close();
    });
    let mut out = stream;
    while !client.is_closed() {
        let mut wrote = false;
        while let Some(line) = client.outbox.pop() {
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
            wrote = true;
        }
        if wrote {
            out.flush()?;
        } else {
            thread::sleep(POLL);
        }
    }
    let _ = out.shutdown(std::net::Shutdown::Both);
    Ok(())
}

fn serve_websocket(stream: TcpStream, client: &Arc<Client>, tx: &Sender<Incoming>) -> std::io::Result<()> {
    use tungstenite::{Error as WsError, Message};
    stream.set_read_timeout(None)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| std::io::Error::other(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    while !client.is_closed() {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.as_str().lines() {
                    handle_line(line, client, tx);
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        while let Some(line) = client.outbox.pop() {
            if ws.send(Message::text(line)).is_err() {
                return Ok(());
            }
        }
    }
    let _ = ws.close(None);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LiveOptions {
    /// Run as fast as possible instead of pacing to simulated time.
    pub headless: bool,
}

/// Runs `sim` to completion while serving telemetry and applying commands.
/// Returns the log of the final (post-reset, if any) run.
pub fn run_live(mut sim: Simulation, server: &StreamServer, opts: LiveOptions) -> Result<Log> {
    let initial = sim.config().clone();
    let decim = decimation(initial.dt_sim);
    let mut paused = false;
    let mut wall_start = Instant::now();
    let mut sim_start = 0.0;
    loop {
        while let Some(msg) = server.try_recv() {
            let was_paused = paused;
            let before = sim.tick();
            match apply_command(&mut sim, &mut paused, &initial, &msg.command) {
                Ok(()) => {
                    if was_paused != paused || sim.tick() != before {
                        wall_start = Instant::now();
                        sim_start = sim.time();
                    }
                    // Acknowledge with the current state, so a pause is visible.
                    if let Some(f) = state_frame(&sim, paused) {
                        server.broadcast(&f);
                    }
                }
                Err(Error::Config(errs)) => return Err(Error::Config(errs)),
                Err(e) => msg.reply_error(e.to_string()),
            }
        }
        if sim.is_done() {
            if let Some(f) = state_frame(&sim, paused) {
                server.broadcast(&f);
            }
            break;
        }
        if paused {
            thread::sleep(Duration::from_millis(5));
            continue;
        }
        sim.step()?;
        if sim.tick().is_multiple_of(decim) {
            if let Some(f) = state_frame(&sim, paused) {
                server.broadcast(&f);
            }
        }
        if !opts.headless {
            let ahead = (sim.time() - sim_start) - wall_start.elapsed().as_secs_f64();
            if ahead > 1e-3 {
                thread::sleep(Duration::from_secs_f64(ahead));
            }
        }
    }
    Ok(sim.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ScenarioKind;

    #[test]
    fn command_parsing() {
        let c = parse_command(r#"{"type":"impulse","sat":"sat1","force":[2,0,0],"torque":[0,0,0],"duration_s":0.5}"#).unwrap();
        assert_eq!(
            c,
            Command::Impulse {
                sat: SatRef::Name("sat1".into()),
                force: [2.0, 0.0, 0.0],
                torque: [0.0; 3],
                duration_s: 0.5
            }
        );
        let c = parse_command(r#"{"type":"impulse","sat":0,"force":[1,2,3],"duration_s":1}"#).unwrap();
        assert!(matches!(c, Command::Impulse { sat: SatRef::Index(0), .. }));
        for (text, action) in [("pause", Action::Pause), ("resume", Action::Resume), ("reset", Action::Reset)] {
            let c = parse_command(&format!(r#"{{"type":"cmd","action":"{text}"}}"#)).unwrap();
            assert_eq!(c, Command::Cmd { action });
        }
        let c = parse_command(r#"{"type":"set_param","path":"vfdm.kp_trans","value":20}"#).unwrap();
        assert_eq!(
            c,
            Command::SetParam {
                path: "vfdm.kp_trans".into(),
                value: 20.0
            }
        );
    }

    #[test]
    fn malformed_commands_rejected() {
        for bad in [
            "not json",
            r#"{"type":"warp"}"#,
            r#"{"type":"cmd","action":"explode"}"#,
            r#"{"type":"impulse","sat":0,"force":[1,0,0]}"#,
            r#"{"type":"cmd","action":"pause","extra":1}"#,
        ] {
            assert!(parse_command(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn frames_serialize_to_protocol_shape() {
        let sim = {
            let mut s = Simulation::new(ScenarioConfig::preset(ScenarioKind::FreeFloat)).unwrap();
            s.step().unwrap();
            s
        };
        let v: serde_json::Value = serde_json::from_str(&state_frame(&sim, false).unwrap().to_line()).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["tick"], 0);
        assert_eq!(v["t"], 0.0);
        assert_eq!(v["status"], "running");
        assert_eq!(v["sats"][0]["name"], "sat1");
        assert_eq!(v["sats"][0]["des_pose"]["orientation"].as_array().unwrap().len(), 4);
        assert_eq!(v["sats"][0]["wrench"]["force"].as_array().unwrap().len(), 3);
        let paused: serde_json::Value = serde_json::from_str(&state_frame(&sim, true).unwrap().to_line()).unwrap();
        assert_eq!(paused["status"], "paused");

        let e: serde_json::Value = serde_json::from_str(&Frame::error("bad").to_line()).unwrap();
        assert_eq!(e, serde_json::json!({"type": "error", "message": "bad"}));
    }

    #[test]
    fn decimation_caps_frame_rate() {
        for dt in [1e-4, 1e-3, 2e-3, 1.0 / 60.0, 0.05] {
            let d = decimation(dt);
            assert!(1.0 / (d as f64 * dt) <= MAX_FRAME_RATE + 1e-9, "dt {dt}");
            assert!(d == 1 || 1.0 / ((d - 1) as f64 * dt) > MAX_FRAME_RATE);
        }
    }

    #[test]
    fn set_param_whitelist() {
        let mut sim = Simulation::new(ScenarioConfig::preset(ScenarioKind::Collision)).unwrap();
        set_param(&mut sim, "vfdm.kp_trans", 20.0).unwrap();
        assert_eq!(sim.vfdm_params().kp_trans, 20.0);
        set_param(&mut sim, "contact.damping", 3.0).unwrap();
        assert_eq!(sim.contact_params().damping, 3.0);
        assert!(set_param(&mut sim, "vfdm.m_e", 2.0).is_err());
        assert!(set_param(&mut sim, "orbit.mu", 2.0).is_err());
        assert!(set_param(&mut sim, "contact.stiffness", 0.0).is_err());
        assert!(set_param(&mut sim, "vfdm.kp_rot", f64::NAN).is_err());
        assert_eq!(SETTABLE_PARAMS.len(), 6);
        for p in SETTABLE_PARAMS {
            set_param(&mut sim, p, 1.0).unwrap();
        }
    }

    #[test]
    fn pause_resume_reset() {
        let cfg = ScenarioConfig::preset(ScenarioKind::FreeFloat);
        let mut sim = Simulation::new(cfg.clone()).unwrap();
        let mut paused = false;
        for _ in 0..10 {
            sim.step().unwrap();
        }
        apply_command(&mut sim, &mut paused, &cfg, &Command::Cmd { action: Action::Pause }).unwrap();
        assert!(paused);
        apply_command(&mut sim, &mut paused, &cfg, &Command::Cmd { action: Action::Resume }).unwrap();
        assert!(!paused);
        apply_command(&mut sim, &mut paused, &cfg, &Command::Cmd { action: Action::Reset }).unwrap();
        let fresh = Simulation::new(cfg.clone()).unwrap();
        assert_eq!(sim.tick(), 0);
        assert_eq!(sim.satellite_states(), fresh.satellite_states());
        assert_eq!(sim.joint_angles(0), fresh.joint_angles(0));
        assert!(sim.log().records.is_empty());

        let bad = Command::Impulse {
            sat: SatRef::Name("ghost".into()),
            force: [1.0, 0.0, 0.0],
            torque: [0.0; 3],
            duration_s: 0.1,
        };
        assert!(apply_command(&mut sim, &mut paused, &cfg, &bad).is_err());
    }
}
