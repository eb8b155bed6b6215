//! Exact event-driven simulation of the controlled chain.
//!
//! Under the stationary policy every counter rate depends only on the current
//! state, so a run is a sequence of competing exponential clocks. No time
//! discretization is involved.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::chain_model::sample_counter;
use crate::error::{Error, Result};
use crate::policy_solver::StationaryPolicy;
use crate::rng::seeded_rng;

/// Sampling events and the full state path of one chain run on `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingTrace {
    pub start: f64,
    pub end: f64,
    /// Sampling instants per sensor, strictly increasing.
    pub events: Vec<Vec<f64>>,
    pub initial_state: usize,
    /// `(time, new state)` for every jump.
    pub state_path: Vec<(f64, usize)>,
}

impl SamplingTrace {
    pub fn horizon(&self) -> f64 {
        self.end - self.start
    }

    pub fn sensors(&self) -> usize {
        self.events.len()
    }

    /// State occupied at the end of the run.
    pub fn final_state(&self) -> usize {
        self.state_path.last().map_or(self.initial_state, |&(_, s)| s)
    }
}

/// Per-state list of `(counter, rate)` with positive rate.
fn active_counters(policy: &StationaryPolicy) -> Vec<Vec<(usize, f64)>> {
    let mut table = vec![Vec::new(); policy.states()];
    for (i, &(src, _)) in policy.transitions.iter().enumerate() {
        let rate = policy.active_rate(i);
        if rate > 0.0 {
            table[src].push((i, rate));
        }
    }
    table
}

/// Runs the chain from `x0` at time 0 up to `horizon` with a fresh generator.
pub fn simulate_chain(policy: &StationaryPolicy, x0: usize, horizon: f64, seed: u64) -> Result<SamplingTrace> {
    let mut rng = seeded_rng(seed);
    simulate_segment(policy, x0, 0.0, horizon, &mut rng)
}

/// Runs the chain on `[start, end]` drawing from `rng`.
pub fn simulate_segment<R: Rng + ?Sized>(
    policy: &StationaryPolicy,
    x0: usize,
    start: f64,
    end: f64,
    rng: &mut R,
) -> Result<SamplingTrace> {
    let n = policy.states();
    if x0 >= n {
        return Err(Error::InvalidState(format!("initial state {x0} out of range for {n} states")));
    }
    if !(end > start) || !end.is_finite() {
        return Err(Error::InvalidSpec(format!("empty simulation window [{start}, {end}]")));
    }
    let table = active_counters(policy);
    let totals: Vec<f64> = table.iter().map(|row| row.iter().map(|&(_, r)| r).sum()).collect();
    let idle = policy.idle();

    let mut events = vec![Vec::new(); policy.sensors];
    let mut state_path = Vec::new();
    let mut state = x0;
    let mut t = start;
    loop {
        let total = totals[state];
        if !(total > 0.0) {
            return Err(Error::AbsorbingState { state });
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += hold;
        if t > end {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let row = &table[state];
        let mut chosen = row[row.len() - 1].0;
        for &(i, r) in row {
            if pick < r {
                chosen = i;
                break;
            }
            pick -= r;
        }
        let (_, target) = policy.transitions[chosen];
        if state == idle {
            // target is a sensor state here
            debug_assert_eq!(chosen, sample_counter(target));
            events[target].push(t);
        }
        state = target;
        state_path.push((t, state));
    }

    Ok(SamplingTrace {
        start,
        end,
        events,
        initial_state: x0,
        state_path,
    })
}

/// Event count per sensor divided by the run length.
pub fn empirical_frequencies(trace: &SamplingTrace) -> Vec<f64> {
    let h = trace.horizon();
    trace.events.iter().map(|e| e.len() as f64 / h).collect()
}

/// Renewal-theory standard error of each empirical frequency,
/// `sqrt(Var Δ / (E{Δ}³ T))`, with the gap moments estimated from the trace.
/// Sensors with fewer than three events fall back to the Poisson value
/// `sqrt(count)/T`.
pub fn frequency_standard_errors(trace: &SamplingTrace) -> Vec<f64> {
    let h = trace.horizon();
    trace
        .events
        .iter()
        .map(|e| {
            if e.len() < 3 {
                return (e.len() as f64).sqrt() / h;
            }
            let gaps: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
            let (mean, var) = mean_var(&gaps);
            (var / (mean.powi(3) * h)).sqrt()
        })
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Inter-sample gaps of one sensor and the two moments used by the pulse and
/// exponential controller bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersampleStats {
    pub gaps: Vec<f64>,
    /// Fraction of gaps shorter than `rho`.
    pub p_lt_rho: f64,
    /// Sample mean of `exp(-2θΔ)`.
    pub exp_moment: f64,
}

pub fn intersample_statistics(trace: &SamplingTrace, sensor: usize, rho: f64, theta: f64) -> Result<IntersampleStats> {
    let events = trace
        .events
        .get(sensor)
        .ok_or_else(|| Error::InvalidSpec(format!("sensor {sensor} not in trace")))?;
    if events.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "sensor {sensor} has {} sampling events, need at least 2",
            events.len()
        )));
    }
    let gaps: Vec<f64> = events.windows(2).map(|w| w[1] - w[0]).collect();
    let n = gaps.len() as f64;
    let p_lt_rho = gaps.iter().filter(|&&g| g < rho).count() as f64 / n;
    let exp_moment = gaps.iter().map(|g| (-2.0 * theta * g).exp()).sum::<f64>() / n;
    Ok(IntersampleStats {
        gaps,
        p_lt_rho,
        exp_moment,
    })
}

/// Time spent in each state over the run.
pub fn occupation_times(trace: &SamplingTrace, states: usize) -> Vec<f64> {
    let mut occ = vec![0.0; states];
    let mut t = trace.start;
    let mut s = trace.initial_state;
    for &(tj, sj) in &trace.state_path {
        occ[s] += tj - t;
        t = tj;
        s = sj;
    }
    occ[s] += trace.end - t;
    occ
}

/// Completed sojourn lengths in `state` (the censored last one is dropped).
pub fn holding_times(trace: &SamplingTrace, state: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = trace.start;
    let mut s = trace.initial_state;
    for &(tj, sj) in &trace.state_path {
        // The first sojourn starts at `start` by fiat; holding is memoryless,
        // so it is still a valid draw.
        if s == state {
            out.push(tj - t);
        }
        t = tj;
        s = sj;
    }
    out
}

/// Realized sampling-plus-effort cost `(Σ ξ N + Σ_j occ_j |K e_j|²) / T`.
pub fn realized_cost(trace: &SamplingTrace, policy: &StationaryPolicy, weights: &[f64]) -> f64 {
    let occ = occupation_times(trace, policy.states());
    let sampling: f64 = trace
        .events
        .iter()
        .zip(weights)
        .map(|(e, w)| w * e.len() as f64)
        .sum();
    let effort: f64 = occ
        .iter()
        .enumerate()
        .map(|(j, o)| o * policy.gains.column(j).norm_squared())
        .sum();
    (sampling + effort) / trace.horizon()
}

/// Writes `sensor,index,time` rows.
pub fn write_trace_csv<W: Write>(trace: &SamplingTrace, mut out: W) -> Result<()> {
    writeln!(out, "sensor,index,time")?;
    for (s, events) in trace.events.iter().enumerate() {
        for (i, t) in events.iter().enumerate() {
            writeln!(out, "{s},{i},{t}")?;
        }
    }
    Ok(())
}
