//! Scenario runner: configuration, the closed loop, logging, metrics and the
//! live stream.

pub mod config;
pub mod log;
pub mod metrics;
pub mod sim;
pub mod stream;

pub use config::{load_config, save_config, ChainSpec, Pulse, SatRef, SatelliteConfig, ScenarioConfig, ScenarioKind};
pub use log::{Log, LogRecord, SatRecord};
pub use metrics::{compute_metrics, ContactMetrics, Metrics, SatMetrics};
pub use sim::{run_scenario, ActivePulse, RunStatus, Simulation};
