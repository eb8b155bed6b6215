//! Scenario orchestration: solve, simulate replicates, attach bounds, check.

use std::path::Path;

use serde::Serialize;

use super::config::{ScenarioConfig, ScenarioKind};
use super::monte_carlo::{monte_carlo, PointwiseStats};
use super::report::{
    write_error_curves, write_file, write_frequencies, BoundReport, ErrorCurve, PhaseSummary, SensorPhase,
    SensorReport, SettleOutcome,
};
use super::schedule::{sample_schedule, solve_phases, worst_case_periodic, PhasePlan, Schedule};
use super::simulate::{kalman_covariance_traces, kalman_errors, scalar_predictor_errors, vector_predictor_errors};
use crate::chain_sim::{intersample_statistics, simulate_segment};
use crate::controllers::{
    bound_exponential, bound_impulsive, bound_pulse, simulate_closed_loop, simulate_coupled_pi, uniform_grid,
    ControllerSpec, CoupledTrajectory,
};
use crate::error::{Error, Result};
use crate::estimators::{bound_scalar_estimation, bound_state_estimation, kalman_intersample_bound};
use crate::plant_models::{LinearPlant, ScalarPlant};
use crate::rng::{replicate_rng, SimRng};

/// Stream used for a schedule shared by all replicates.
const SHARED_SCHEDULE_STREAM: u64 = u64::MAX;

/// Everything a scenario run produces.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    #[serde(skip)]
    pub plans: Vec<PhasePlan>,
    pub grid: Vec<f64>,
    pub curves: Vec<ErrorCurve>,
    pub report: BoundReport,
    /// First replicate's trajectory for the coupled loop.
    pub example: Option<CoupledTrajectory>,
}

enum Plants {
    Scalar(Vec<ScalarPlant>),
    Linear(Vec<LinearPlant>),
    None,
}

/// Runs a scenario and wraps any failure with its name.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    run_inner(cfg).map_err(|e| Error::Scenario {
        scenario: cfg.name.clone(),
        source: Box::new(e),
    })
}

/// Index of the phase containing `t`; the last phase is closed on the right.
fn phase_at(plans: &[PhasePlan], t: f64) -> usize {
    plans
        .iter()
        .position(|p| t >= p.start && t < p.end)
        .unwrap_or(plans.len() - 1)
}

fn count_in(events: &[f64], start: f64, end: f64, closed: bool) -> usize {
    events
        .iter()
        .filter(|&&t| t >= start && (t < end || (closed && t <= end)))
        .count()
}

/// Frequency each sensor actually runs at in phase `p`.
fn frequency_in_use(plans: &[PhasePlan], periodic: bool, p: usize, s: usize) -> f64 {
    if periodic {
        plans.iter().max_by_key(|q| q.active.len()).map_or(0.0, |q| q.f[s])
    } else {
        plans[p].f[s]
    }
}

fn simulate_replicate(
    cfg: &ScenarioConfig,
    plans: &[PhasePlan],
    plants: &Plants,
    grid: &[f64],
    shared: Option<&Schedule>,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Option<CoupledTrajectory>)> {
    let l = cfg.sensors();
    let owned;
    let schedule = match shared {
        Some(s) => s,
        None => {
            owned = sample_schedule(plans, l, rng)?;
            &owned
        }
    };
    let mut out = Vec::with_capacity(l * grid.len() + plans.len() * l + 2);
    let mut example = None;
    match (cfg.kind, plants) {
        (ScenarioKind::EstimationScalar, Plants::Scalar(ps)) => {
            for (s, p) in ps.iter().enumerate() {
                out.extend(scalar_predictor_errors(p, &schedule.events[s], grid, rng));
            }
        }
        (ScenarioKind::EstimationVector, Plants::Linear(ps)) => {
            for (s, p) in ps.iter().enumerate() {
                out.extend(vector_predictor_errors(p, &schedule.events[s], grid, rng)?);
            }
        }
        (ScenarioKind::EstimationKalman, Plants::Linear(ps)) => {
            for (s, p) in ps.iter().enumerate() {
                out.extend(kalman_errors(p, &schedule.events[s], grid, rng)?);
            }
        }
        (ScenarioKind::Control, Plants::Scalar(ps)) => {
            let ctrl = cfg.controller.expect("validated");
            for (s, p) in ps.iter().enumerate() {
                let path = simulate_closed_loop(p, &ctrl, &schedule.events[s], grid, rng)?;
                out.extend(path.state.iter().map(|z| z * z));
            }
        }
        (ScenarioKind::CoupledPi, Plants::None) => {
            let Some(ControllerSpec::Pi { kp, ki }) = cfg.controller else {
                unreachable!("validated")
            };
            let ring = cfg.ring.expect("validated");
            let tr = simulate_coupled_pi(&ring, &schedule.events, &cfg.disturbances, kp, ki, cfg.horizon, cfg.grid_dt)?;
            for s in 0..l {
                out.extend(tr.state.iter().map(|row| row[s] * row[s]));
            }
            example = Some(tr);
        }
        _ => return Err(Error::Config("plants do not match the scenario kind".into())),
    }
    let last = plans.len() - 1;
    for (p, plan) in plans.iter().enumerate() {
        for ev in &schedule.events {
            out.push(count_in(ev, plan.start, plan.end, p == last) as f64 / (plan.end - plan.start));
        }
    }
    if let (Some(check), Some(tr)) = (cfg.settle, &example) {
        let max_abs = tr
            .grid
            .iter()
            .zip(&tr.state)
            .filter(|(t, _)| **t >= check.by - check.window && **t < check.by)
            .map(|(_, row)| row[check.subsystem].abs())
            .fold(0.0, f64::max);
        out.push(f64::from(u8::from(max_abs <= check.tolerance)));
        out.push(max_abs);
    }
    Ok((out, example))
}

/// Gap statistics for the pulse and exponential bounds in phase `p`.
fn gap_statistics(
    cfg: &ScenarioConfig,
    plans: &[PhasePlan],
    shared: Option<&Schedule>,
    p: usize,
    s: usize,
    rho: f64,
    theta: f64,
) -> Result<(f64, f64)> {
    if let Some(sched) = shared {
        let gaps: Vec<f64> = sched.events[s].windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            return Err(Error::InsufficientData(format!("sensor {s} has fewer than two periodic samples")));
        }
        let n = gaps.len() as f64;
        let p_lt = gaps.iter().filter(|&&g| g < rho).count() as f64 / n;
        let m = gaps.iter().map(|g| (-2.0 * theta * g).exp()).sum::<f64>() / n;
        return Ok((p_lt, m));
    }
    let plan = &plans[p];
    let local = plan.local_index(s).expect("active sensor");
    let stream = SHARED_SCHEDULE_STREAM - 1 - p as u64;
    let mut rng = replicate_rng(cfg.seed, stream);
    let trace = simulate_segment(&plan.policy, plan.policy.idle(), 0.0, cfg.stats_horizon, &mut rng)?;
    let st = intersample_statistics(&trace, local, rho, theta)?;
    Ok((st.p_lt_rho, st.exp_moment))
}

/// Constant bound of sensor `s` in phase `p`, with gap statistics when used.
fn phase_bound(
    cfg: &ScenarioConfig,
    plans: &[PhasePlan],
    plants: &Plants,
    shared: Option<&Schedule>,
    p: usize,
    s: usize,
    f: f64,
) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let diverges = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::BoundDiverges(_)) => Ok(None),
        Err(e) => Err(e),
    };
    match (cfg.kind, plants) {
        (ScenarioKind::EstimationScalar, Plants::Scalar(ps)) => {
            let pl = &ps[s];
            Ok((Some(bound_scalar_estimation(pl.gamma, pl.sigma, pl.eta, f)?.value), None, None))
        }
        (ScenarioKind::EstimationVector, Plants::Linear(ps)) => Ok((Some(bound_state_estimation(&ps[s], f)?.value), None, None)),
        (ScenarioKind::Control, Plants::Scalar(ps)) => {
            let pl = &ps[s];
            match cfg.controller.expect("validated") {
                ControllerSpec::Impulsive => Ok((Some(bound_impulsive(pl.gamma, pl.sigma, pl.eta, f)?), None, None)),
                ControllerSpec::Pulse { rho } => {
                    let (p_lt, _) = gap_statistics(cfg, plans, shared, p, s, rho, 1.0)?;
                    let b = diverges(bound_pulse(pl.gamma, pl.sigma, pl.eta, f, rho, p_lt))?;
                    Ok((b, Some(p_lt), None))
                }
                ControllerSpec::Exponential { theta } => {
                    let (_, m) = gap_statistics(cfg, plans, shared, p, s, 0.0, theta)?;
                    let b = diverges(bound_exponential(pl.gamma, pl.sigma, pl.eta, f, m))?;
                    Ok((b, None, Some(m)))
                }
                ControllerSpec::Pi { .. } => Ok((None, None, None)),
            }
        }
        _ => Ok((None, None, None)),
    }
}

/// One row of the analytic bound table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub sensor: usize,
    pub phase: usize,
    pub f: f64,
    /// `None` when the bound diverges or depends on the realized schedule.
    pub bound: Option<f64>,
    pub p_lt_rho: Option<f64>,
    pub exp_moment: Option<f64>,
}

/// Analytic bounds per active sensor and phase, without any plant simulation.
pub fn bounds_table(cfg: &ScenarioConfig) -> Result<Vec<BoundRow>> {
    cfg.validate()?;
    let plans = solve_phases(cfg)?;
    let plants = match cfg.kind {
        ScenarioKind::EstimationScalar | ScenarioKind::Control => Plants::Scalar(cfg.scalar_plants()?),
        ScenarioKind::EstimationVector => Plants::Linear(cfg.linear_plants()?),
        ScenarioKind::EstimationKalman | ScenarioKind::CoupledPi => Plants::None,
    };
    let shared = if cfg.periodic {
        Some(worst_case_periodic(&plans, cfg.horizon)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (p, plan) in plans.iter().enumerate() {
        for &s in &plan.active {
            let f = frequency_in_use(&plans, cfg.periodic, p, s);
            let (bound, p_lt_rho, exp_moment) = if f > 0.0 {
                phase_bound(cfg, &plans, &plants, shared.as_ref(), p, s, f)?
            } else {
                (None, None, None)
            };
            rows.push(BoundRow {
                sensor: s,
                phase: p,
                f,
                bound,
                p_lt_rho,
                exp_moment,
            });
        }
    }
    Ok(rows)
}

/// Conditional Kalman bound on the grid for one fixed schedule.
fn kalman_bound_curve(plant: &LinearPlant, events: &[f64], grid: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let (prior, traces) = kalman_covariance_traces(plant, events)?;
    grid.iter()
        .map(|&t| {
            let i = events.partition_point(|&e| e <= t);
            let (tr_p, from) = if i == 0 { (prior, 0.0) } else { (traces[i - 1], events[i - 1]) };
            let to = events.get(i).copied().unwrap_or(horizon);
            Ok(kalman_intersample_bound(tr_p, plant, to - from)?.value)
        })
        .collect()
}

fn run_inner(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let l = cfg.sensors();
    let plans = solve_phases(cfg)?;
    let grid = uniform_grid(cfg.horizon, cfg.grid_dt)?;
    let g = grid.len();
    let plants = match cfg.kind {
        ScenarioKind::EstimationScalar | ScenarioKind::Control => Plants::Scalar(cfg.scalar_plants()?),
        ScenarioKind::EstimationVector | ScenarioKind::EstimationKalman => Plants::Linear(cfg.linear_plants()?),
        ScenarioKind::CoupledPi => Plants::None,
    };

    let shared = if cfg.periodic {
        Some(worst_case_periodic(&plans, cfg.horizon)?)
    } else if cfg.kind == ScenarioKind::EstimationKalman {
        let mut rng = replicate_rng(cfg.seed, SHARED_SCHEDULE_STREAM);
        Some(sample_schedule(&plans, l, &mut rng)?)
    } else {
        None
    };

    let stats: PointwiseStats = monte_carlo(cfg.replicates, cfg.seed, |_, rng| {
        simulate_replicate(cfg, &plans, &plants, &grid, shared.as_ref(), rng).map(|(v, _)| v)
    })?;
    let example = if cfg.kind == ScenarioKind::CoupledPi {
        let mut rng = replicate_rng(cfg.seed, 0);
        simulate_replicate(cfg, &plans, &plants, &grid, shared.as_ref(), &mut rng)?.1
    } else {
        None
    };

    let freq_offset = l * g;
    let settle_offset = freq_offset + plans.len() * l;

    let mut curves = Vec::with_capacity(l);
    let mut sensors = Vec::with_capacity(l);
    for s in 0..l {
        let mut phases = Vec::with_capacity(plans.len());
        let mut bounds_by_phase = Vec::with_capacity(plans.len());
        for (p, plan) in plans.iter().enumerate() {
            let active = plan.local_index(s).is_some();
            let f = frequency_in_use(&plans, cfg.periodic, p, s);
            let (bound, p_lt_rho, exp_moment) = if active && f > 0.0 {
                phase_bound(cfg, &plans, &plants, shared.as_ref(), p, s, f)?
            } else {
                (None, None, None)
            };
            bounds_by_phase.push(bound);
            let idx = freq_offset + p * l + s;
            let warmup = cfg.warmup.unwrap_or(if f > 0.0 { 2.0 / f } else { f64::INFINITY });
            phases.push(SensorPhase {
                phase: p,
                active,
                f_analytic: f,
                f_empirical: stats.mean[idx],
                f_se: stats.se(idx),
                bound,
                p_lt_rho,
                exp_moment,
                warmup,
                mean_sq: None,
            });
        }

        let mean_sq = stats.mean[s * g..(s + 1) * g].to_vec();
        let se: Vec<f64> = (0..g).map(|k| stats.se(s * g + k)).collect();
        let ci_half: Vec<f64> = (0..g).map(|k| stats.ci_half(s * g + k)).collect();
        let bound: Vec<f64> = match (&plants, cfg.kind) {
            (Plants::Linear(ps), ScenarioKind::EstimationKalman) => {
                kalman_bound_curve(&ps[s], &shared.as_ref().expect("fixed schedule").events[s], &grid, cfg.horizon)?
            }
            _ => grid
                .iter()
                .map(|&t| bounds_by_phase[phase_at(&plans, t)].unwrap_or(f64::NAN))
                .collect(),
        };

        let (mut checked, mut violations, mut max_excess) = (0, 0, f64::NEG_INFINITY);
        let mut sums = vec![(0.0, 0usize); plans.len()];
        for (k, &t) in grid.iter().enumerate() {
            let p = phase_at(&plans, t);
            let ph = &phases[p];
            if !ph.active || t < plans[p].start + ph.warmup {
                continue;
            }
            sums[p].0 += mean_sq[k];
            sums[p].1 += 1;
            if bound[k].is_finite() {
                checked += 1;
                let excess = mean_sq[k] - (bound[k] + 3.0 * se[k]);
                max_excess = max_excess.max(excess);
                if excess > 0.0 {
                    violations += 1;
                }
            }
        }
        for (ph, (sum, n)) in phases.iter_mut().zip(sums) {
            ph.mean_sq = (n > 0).then(|| sum / n as f64);
        }
        sensors.push(SensorReport {
            sensor: s,
            phases,
            checked_points: checked,
            violations,
            max_excess: (checked > 0).then_some(max_excess),
            pass: (checked > 0).then_some(violations == 0),
        });
        curves.push(ErrorCurve {
            mean_sq,
            se,
            ci_half,
            bound,
        });
    }

    let settle = cfg.settle.map(|c| {
        let fraction = stats.mean[settle_offset];
        SettleOutcome {
            subsystem: c.subsystem,
            by: c.by,
            window: c.window,
            tolerance: c.tolerance,
            fraction_settled: fraction,
            mean_max_abs: stats.mean[settle_offset + 1],
            pass: fraction == 1.0,
        }
    });
    let pass = sensors.iter().all(|s| s.pass != Some(false)) && settle.as_ref().is_none_or(|s| s.pass);
    let report = BoundReport {
        scenario: cfg.name.clone(),
        kind: cfg.kind,
        seed: cfg.seed,
        replicates: cfg.replicates,
        horizon: cfg.horizon,
        grid_dt: cfg.grid_dt,
        periodic: cfg.periodic,
        phases: plans
            .iter()
            .map(|p| PhaseSummary {
                start: p.start,
                end: p.end,
                active: p.active.len(),
                rho: p.policy.rho,
                used_continuation: p.policy.used_continuation,
            })
            .collect(),
        sensors,
        settle,
        pass,
    };
    Ok(ScenarioRun {
        config: cfg.clone(),
        plans,
        grid,
        curves,
        report,
        example,
    })
}

/// Writes `config.json`, `report.json`, `policy_gains.csv`,
/// `frequencies.csv`, `error_curves.csv` and, for the coupled loop,
/// `trajectory.csv` into `dir`.
pub fn write_artifacts(run: &ScenarioRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_file(dir, "config.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &run.config)?;
        Ok(())
    })?;
    write_file(dir, "report.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &run.report)?;
        Ok(())
    })?;
    write_file(dir, "policy_gains.csv", |w| write_gains(w, &run.plans))?;
    write_file(dir, "frequencies.csv", |w| write_frequencies(w, &run.report))?;
    write_file(dir, "error_curves.csv", |w| write_error_curves(w, &run.grid, &run.curves))?;
    if let Some(tr) = &run.example {
        write_file(dir, "trajectory.csv", |w| tr.write_csv(w))?;
    }
    Ok(())
}

/// `counter,state,gain,phase` with counters and states in each phase's own
/// numbering.
pub fn write_gains<W: std::io::Write>(mut out: W, plans: &[PhasePlan]) -> Result<()> {
    writeln!(out, "counter,state,gain,phase")?;
    for (p, plan) in plans.iter().enumerate() {
        let k = &plan.policy.gains;
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                // `+ 0.0` folds a negative zero into `0`
                writeln!(out, "{i},{j},{},{p}", k[(i, j)] + 0.0)?;
            }
        }
    }
    Ok(())
}
