//! Summary statistics over a run log.

use serde::Serialize;

use super::log::Log;
use crate::ods::OrbitParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatMetrics {
    /// Isochronous position error ‖executed − desired‖, m.
    pub max_pos_err: f64,
    pub mean_pos_err: f64,
    /// Velocity error, m/s. Tick 0 is skipped (no executed velocity yet).
    pub max_vel_err: f64,
    pub mean_vel_err: f64,
    pub peak_force: f64,
    pub peak_torque: f64,
    /// Largest drift of `ẏ + 2Ωx` (desired state) within a force-free span;
    /// `None` when no tick is force-free.
    pub first_integral_drift: Option<f64>,
    /// Pearson correlation of desired speed with position error over ticks
    /// 1.., `None` when either series is constant.
    pub speed_error_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactMetrics {
    /// Maximal runs of ticks with positive overlap.
    pub episodes: usize,
    pub ticks: usize,
    pub first_tick: u64,
    pub last_tick: u64,
    /// max ‖F1 + F2‖ over contact ticks, N.
    pub force_symmetry_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub ticks: usize,
    pub sats: Vec<SatMetrics>,
    pub contact: Option<ContactMetrics>,
}

pub fn compute_metrics(log: &Log, orbit: &OrbitParams) -> Metrics {
    let omega = orbit.omega();
    let recs = &log.records;
    let sats = (0..log.dofs.len())
        .map(|i| {
            let pos_err: Vec<f64> = recs
                .iter()
                .map(|r| (r.sats[i].act_pose.position - r.sats[i].des_pose.position).norm())
                .collect();
            let vel_err: Vec<f64> = recs
                .iter()
                .skip(1)
                .map(|r| (r.sats[i].act_vel - r.sats[i].des_vel).norm())
                .collect();
            let speed: Vec<f64> = recs.iter().skip(1).map(|r| r.sats[i].des_vel.norm()).collect();

            let mut drift: Option<f64> = None;
            let mut span_start: Option<f64> = None;
            for r in recs {
                let s = &r.sats[i];
                let free = s.wrench.force == nalgebra::Vector3::zeros() && s.wrench.torque == nalgebra::Vector3::zeros();
                if !free {
                    span_start = None;
                    continue;
                }
                let integral = s.des_vel.y + 2.0 * omega * s.des_pose.position.x;
                let start = *span_start.get_or_insert(integral);
                let d = (integral - start).abs();
                drift = Some(drift.map_or(d, |m| m.max(d)));
            }

            SatMetrics {
                max_pos_err: max(&pos_err),
                mean_pos_err: mean(&pos_err),
                max_vel_err: max(&vel_err),
                mean_vel_err: mean(&vel_err),
                peak_force: recs.iter().map(|r| r.sats[i].wrench.force.norm()).fold(0.0, f64::max),
                peak_torque: recs.iter().map(|r| r.sats[i].wrench.torque.norm()).fold(0.0, f64::max),
                first_integral_drift: drift,
                speed_error_correlation: pearson(&speed, &pos_err[1.min(pos_err.len())..]),
            }
        })
        .collect();

    let contact = (log.dofs.len() == 2).then(|| contact_metrics(log)).flatten();
    Metrics {
        ticks: recs.len(),
        sats,
        contact,
    }
}

fn contact_metrics(log: &Log) -> Option<ContactMetrics> {
    let mut episodes = 0;
    let mut ticks = 0;
    let mut first = None;
    let mut last = 0;
    let mut residual: f64 = 0.0;
    let mut prev_in = false;
    for r in &log.records {
        let inside = r.contact_depth > 0.0;
        if inside {
            if !prev_in {
                episodes += 1;
            }
            ticks += 1;
            first.get_or_insert(r.tick);
            last = r.tick;
            residual = residual.max((r.sats[0].wrench.force + r.sats[1].wrench.force).norm());
        }
        prev_in = inside;
    }
    first.map(|first_tick| ContactMetrics {
        episodes,
        ticks,
        first_tick,
        last_tick: last,
        force_symmetry_residual: residual,
    })
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
