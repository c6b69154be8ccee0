//! Offline analysis of recorded traces.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use super::Snapshot;
use crate::plant::PlantParams;
use crate::transduction::DrivetrainConfig;

/// Millijoules per N·cm·degree.
pub const MJ_PER_NCM_DEG: f64 = 0.01 * PI / 180.0 * 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// Angular bin width for the torque-angle curve, degrees.
    pub bin_width_deg: f64,
    /// Knob inertia for the energy balance, N·cm·s²/deg.
    pub inertia: f64,
    /// Peak-to-peak swing above which late motion counts as oscillation.
    pub oscillation_threshold_deg: f64,
    /// Minimum velocity reversals in the window for sustained oscillation.
    pub min_reversals: usize,
    /// Longest tail window inspected for oscillation, seconds.
    pub max_window_s: f64,
}

impl AnalysisOptions {
    pub fn new(drivetrain: &DrivetrainConfig, plant: &PlantParams) -> Self {
        let res = drivetrain.degrees_per_count();
        Self {
            bin_width_deg: res,
            inertia: plant.inertia,
            oscillation_threshold_deg: 2.0 * res,
            min_reversals: 4,
            max_window_s: 1.0,
        }
    }
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self::new(&DrivetrainConfig::default(), &PlantParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBalance {
    pub initial_kinetic_mj: f64,
    pub final_kinetic_mj: f64,
    pub motor_work_mj: f64,
    pub hand_work_mj: f64,
    /// Work in minus kinetic energy gained: what friction took out.
    pub dissipated_mj: f64,
    /// Largest single-tick rise in kinetic energy.
    pub max_tick_increase_mj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Oscillation {
    pub sustained: bool,
    pub window_s: f64,
    pub peak_to_peak_deg: f64,
    pub velocity_reversals: usize,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub rows: usize,
    pub duration_s: f64,
    /// Stable equilibria of the torque-angle curve (negative-slope zero
    /// crossings).
    pub detent_count: usize,
    pub detent_angles_deg: Vec<f64>,
    pub max_abs_torque_ncm: f64,
    pub energy: EnergyBalance,
    pub oscillation: Oscillation,
}

pub fn analyze(trace: &[Snapshot], opts: &AnalysisOptions) -> AnalysisReport {
    let duration_s = match (trace.first(), trace.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    let detent_angles_deg = stable_equilibria(trace, opts.bin_width_deg);
    AnalysisReport {
        rows: trace.len(),
        duration_s,
        detent_count: detent_angles_deg.len(),
        detent_angles_deg,
        max_abs_torque_ncm: trace.iter().map(|s| s.torque_cmd_ncm.abs()).fold(0.0, f64::max),
        energy: energy_balance(trace, opts.inertia),
        oscillation: oscillation(trace, opts),
    }
}

/// Bin the trace by angle, average the commanded torque per bin and return
/// the angles where the curve crosses from positive to negative.
pub fn stable_equilibria(trace: &[Snapshot], bin_width_deg: f64) -> Vec<f64> {
    let mut bins: BTreeMap<i64, (f64, u32)> = BTreeMap::new();
    for s in trace {
        let key = (s.theta_deg / bin_width_deg).floor() as i64;
        let entry = bins.entry(key).or_insert((0.0, 0));
        entry.0 += s.torque_cmd_ncm;
        entry.1 += 1;
    }
    let signed: Vec<(i64, f64)> = bins
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .filter(|(_, mean)| mean.abs() > 1e-9)
        .collect();
    signed
        .windows(2)
        .filter(|w| w[0].1 > 0.0 && w[1].1 < 0.0)
        .map(|w| (w[0].0 + 1) as f64 * bin_width_deg)
        .collect()
}

pub fn energy_balance(trace: &[Snapshot], inertia: f64) -> EnergyBalance {
    let kinetic = |s: &Snapshot| 0.5 * inertia * s.omega_dps * s.omega_dps * MJ_PER_NCM_DEG;
    let mut motor = 0.0;
    let mut hand = 0.0;
    let mut max_increase = 0.0f64;
    for w in trace.windows(2) {
        let d_theta = w[1].theta_deg - w[0].theta_deg;
        motor += w[1].torque_cmd_ncm * d_theta;
        hand += w[1].hand_torque_ncm * d_theta;
        max_increase = max_increase.max(kinetic(&w[1]) - kinetic(&w[0]));
    }
    let initial = trace.first().map(kinetic).unwrap_or(0.0);
    let last = trace.last().map(kinetic).unwrap_or(0.0);
    let motor_work_mj = motor * MJ_PER_NCM_DEG;
    let hand_work_mj = hand * MJ_PER_NCM_DEG;
    EnergyBalance {
        initial_kinetic_mj: initial,
        final_kinetic_mj: last,
        motor_work_mj,
        hand_work_mj,
        dissipated_mj: motor_work_mj + hand_work_mj - (last - initial),
        max_tick_increase_mj: max_increase,
    }
}

/// Look for a limit cycle in the tail of the trace.
pub fn oscillation(trace: &[Snapshot], opts: &AnalysisOptions) -> Oscillation {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Oscillation {
            sustained: false,
            window_s: 0.0,
            peak_to_peak_deg: 0.0,
            velocity_reversals: 0,
            frequency_hz: 0.0,
        };
    };
    let window_s = opts.max_window_s.min(0.5 * (last.t - first.t));
    let start = last.t - window_s;
    let tail: Vec<&Snapshot> = trace.iter().filter(|s| s.t >= start).collect();
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.theta_deg), hi.max(s.theta_deg)));
    let signs: Vec<bool> = tail
        .iter()
        .filter(|s| s.omega_dps != 0.0)
        .map(|s| s.omega_dps > 0.0)
        .collect();
    let reversals = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let peak_to_peak_deg = hi - lo;
    Oscillation {
        sustained: peak_to_peak_deg > opts.oscillation_threshold_deg && reversals >= opts.min_reversals,
        window_s,
        peak_to_peak_deg,
        velocity_reversals: reversals,
        frequency_hz: if window_s > 0.0 { reversals as f64 / 2.0 / window_s } else { 0.0 },
    }
}
