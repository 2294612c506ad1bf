//! Independent solves and scenario runs over many inputs.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every function runs sequentially. Results are identical either
//! way and come back in input order.

use crate::error::Result;
use crate::harness::{compute_metrics, run_scenario, Metrics, ScenarioConfig};
use crate::kinematics::{Pose, SerialChain};
use crate::vfdm::{solve_to_convergence, Solution, VfdmParams};

#[cfg(feature = "parallel")]
macro_rules! par_map {
    ($items:expr, $f:expr) => {{
        use rayon::prelude::*;
        $items.par_iter().map($f).collect()
    }};
}

#[cfg(not(feature = "parallel"))]
macro_rules! par_map {
    ($items:expr, $f:expr) => {
        $items.iter().map($f).collect()
    };
}

/// Solves every target from the same start.
pub fn solve_batch(chain: &SerialChain, q0: &[f64], targets: &[Pose], params: &VfdmParams) -> Vec<Result<Solution>> {
    par_map!(targets, |t| solve_to_convergence(chain, q0, t, params))
}

/// Always sequential; the reference for [`solve_batch`].
pub fn solve_batch_sequential(chain: &SerialChain, q0: &[f64], targets: &[Pose], params: &VfdmParams) -> Vec<Result<Solution>> {
    targets.iter().map(|t| solve_to_convergence(chain, q0, t, params)).collect()
}

/// Runs each scenario headless and summarizes its log.
pub fn run_sweep(configs: &[ScenarioConfig]) -> Vec<Result<Metrics>> {
    par_map!(configs, |c: &ScenarioConfig| {
        run_scenario(c.clone()).map(|log| compute_metrics(&log, &c.orbit))
    })
}

pub fn run_sweep_sequential(configs: &[ScenarioConfig]) -> Vec<Result<Metrics>> {
    configs
        .iter()
        .map(|c| run_scenario(c.clone()).map(|log| compute_metrics(&log, &c.orbit)))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::harness::ScenarioKind;
    use crate::kinematics::{forward_kinematics, ur10e_nominal, UR10E_HOME};
    use crate::vfdm::conditioned_chain;

    #[test]
    fn batch_matches_sequential() {
        let params = VfdmParams::default();
        let chain = conditioned_chain(&ur10e_nominal(), &params);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets: Vec<Pose> = (0..16)
            .map(|_| {
                let q: Vec<f64> = UR10E_HOME.iter().map(|h| h + rng.random_range(-0.1..0.1)).collect();
                forward_kinematics(&chain, &q).unwrap()
            })
            .collect();
        let a = solve_batch(&chain, &UR10E_HOME, &targets, &params);
        let b = solve_batch_sequential(&chain, &UR10E_HOME, &targets, &params);
        assert_eq!(a.len(), targets.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
        }
    }

    #[test]
    fn sweep_matches_sequential() {
        let configs: Vec<ScenarioConfig> = [0.2, 0.3]
            .iter()
            .map(|&d| ScenarioConfig {
                duration: Some(d),
                ..ScenarioConfig::preset(ScenarioKind::Collision)
            })
            .collect();
        let a: Vec<Metrics> = run_sweep(&configs).into_iter().map(|r| r.unwrap()).collect();
        let b: Vec<Metrics> = run_sweep_sequential(&configs).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(a[0].ticks, 200);
    }
}
