//! Sampling schedules: phase-wise optimal chains and periodic baselines.

use rand::Rng;
use serde::Serialize;

use super::config::ScenarioConfig;
use crate::chain_analysis::{analyze, FrequencyReport};
use crate::chain_model::build_matrices;
use crate::chain_sim::simulate_segment;
use crate::error::{invalid, Result};
use crate::policy_solver::{solve_stationary, StationaryPolicy};

/// Solved policy for one phase.
#[derive(Debug, Clone)]
pub struct PhasePlan {
    pub start: f64,
    pub end: f64,
    /// Global index of each local sensor.
    pub active: Vec<usize>,
    pub policy: StationaryPolicy,
    pub report: FrequencyReport,
    /// Analytic frequency per global sensor, zero when inactive.
    pub f: Vec<f64>,
}

impl PhasePlan {
    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.active.iter().position(|&g| g == global)
    }
}

/// Solves the stationary policy of every phase.
pub fn solve_phases(cfg: &ScenarioConfig) -> Result<Vec<PhasePlan>> {
    let l = cfg.sensors();
    cfg.effective_phases()
        .into_iter()
        .map(|phase| {
            let weights = phase.weights.as_deref().unwrap_or(&cfg.chain.weights);
            let spec = cfg.phase_spec(&phase.active, weights)?;
            let mats = build_matrices(&spec)?;
            let policy = solve_stationary(&mats)?;
            let report = analyze(&mats, &policy)?;
            let mut f = vec![0.0; l];
            for (local, &g) in phase.active.iter().enumerate() {
                f[g] = report.f[local];
            }
            Ok(PhasePlan {
                start: phase.start,
                end: phase.end,
                active: phase.active,
                policy,
                report,
                f,
            })
        })
        .collect()
}

/// Sampling instants per global sensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub events: Vec<Vec<f64>>,
}

/// Runs the phase chains back to back starting from idle.
///
/// At a phase boundary the chain state carries over when its sensor stays
/// active and is sent to idle otherwise.
pub fn sample_schedule<R: Rng + ?Sized>(plans: &[PhasePlan], sensors: usize, rng: &mut R) -> Result<Schedule> {
    let mut events = vec![Vec::new(); sensors];
    // global sensor occupied, or None for idle
    let mut occupied: Option<usize> = None;
    for plan in plans {
        let x0 = occupied
            .and_then(|g| plan.local_index(g))
            .unwrap_or_else(|| plan.policy.idle());
        let trace = simulate_segment(&plan.policy, x0, plan.start, plan.end, rng)?;
        for (local, ev) in trace.events.iter().enumerate() {
            events[plan.active[local]].extend_from_slice(ev);
        }
        let last = trace.final_state();
        occupied = (last != plan.policy.idle()).then(|| plan.active[last]);
    }
    Ok(Schedule { events })
}

/// Deterministic events `offset + k/f` in `[0, horizon]`.
pub fn periodic_schedule(f: &[f64], horizon: f64, offsets: &[f64]) -> Result<Schedule> {
    if f.len() != offsets.len() {
        return Err(invalid("one offset per sensor is required"));
    }
    if let Some(bad) = f.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(invalid(format!("periodic frequencies must be positive, got {bad}")));
    }
    let events = f
        .iter()
        .zip(offsets)
        .map(|(&fl, &off)| {
            let period = 1.0 / fl;
            (0..)
                .map(|k| off + k as f64 * period)
                .take_while(|&t| t <= horizon)
                .collect()
        })
        .collect();
    Ok(Schedule { events })
}

/// Periodic baseline at the frequencies of the phase with the most active
/// sensors, applied over the whole horizon.
pub fn worst_case_periodic(plans: &[PhasePlan], horizon: f64) -> Result<Schedule> {
    let busiest = plans
        .iter()
        .max_by_key(|p| p.active.len())
        .ok_or_else(|| invalid("no phases"))?;
    let offsets = vec![0.0; busiest.f.len()];
    periodic_schedule(&busiest.f, horizon, &offsets)
}
