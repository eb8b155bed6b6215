//! Report types and CSV writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::ScenarioKind;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub start: f64,
    pub end: f64,
    pub active: usize,
    /// Predicted long-run average cost of the phase policy.
    pub rho: f64,
    pub used_continuation: bool,
}

/// Per-sensor, per-phase numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorPhase {
    pub phase: usize,
    pub active: bool,
    pub f_analytic: f64,
    pub f_empirical: f64,
    pub f_se: f64,
    /// Constant bound for the phase, when one applies.
    pub bound: Option<f64>,
    /// Gap statistics feeding the pulse or exponential bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_lt_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exp_moment: Option<f64>,
    pub warmup: f64,
    /// Time average of the Monte Carlo mean after warm-up.
    pub mean_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorReport {
    pub sensor: usize,
    pub phases: Vec<SensorPhase>,
    /// Grid points compared against a bound.
    pub checked_points: usize,
    pub violations: usize,
    /// Largest `mean - (bound + 3 SE)` over checked points.
    pub max_excess: Option<f64>,
    /// `None` when no bound applies.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettleOutcome {
    pub subsystem: usize,
    pub by: f64,
    pub window: f64,
    pub tolerance: f64,
    pub fraction_settled: f64,
    /// Mean over replicates of `max |z|` in the window.
    pub mean_max_abs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub replicates: usize,
    pub horizon: f64,
    pub grid_dt: f64,
    pub periodic: bool,
    pub phases: Vec<PhaseSummary>,
    pub sensors: Vec<SensorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle: Option<SettleOutcome>,
    pub pass: bool,
}

impl BoundReport {
    /// Sensors whose curve crossed its bound.
    pub fn failing_sensors(&self) -> Vec<usize> {
        self.sensors
            .iter()
            .filter(|s| s.pass == Some(false))
            .map(|s| s.sensor)
            .collect()
    }
}

/// Pointwise curve of one sensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub mean_sq: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_half: Vec<f64>,
    /// NaN where no bound applies.
    pub bound: Vec<f64>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn opt(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

/// `time,sensor,mean_sq,ci_half,bound`; the bound is blank where none applies.
pub fn write_error_curves<W: Write>(mut out: W, grid: &[f64], curves: &[ErrorCurve]) -> Result<()> {
    writeln!(out, "time,sensor,mean_sq,ci_half,bound")?;
    for (s, c) in curves.iter().enumerate() {
        for (k, t) in grid.iter().enumerate() {
            writeln!(out, "{t},{s},{},{},{}", c.mean_sq[k], c.ci_half[k], opt(c.bound[k]))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `sensor,f_analytic,f_empirical,se,phase` for active sensors.
pub fn write_frequencies<W: Write>(mut out: W, report: &BoundReport) -> Result<()> {
    writeln!(out, "sensor,f_analytic,f_empirical,se,phase")?;
    for s in &report.sensors {
        for p in s.phases.iter().filter(|p| p.active) {
            writeln!(out, "{},{},{},{},{}", s.sensor, p.f_analytic, p.f_empirical, p.f_se, p.phase)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn write_file<F>(dir: &Path, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(dir, name)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_bound_cells() {
        let curve = ErrorCurve {
            mean_sq: vec![0.5],
            se: vec![0.1],
            ci_half: vec![0.2],
            bound: vec![f64::NAN],
        };
        let mut buf = Vec::new();
        write_error_curves(&mut buf, &[0.0], &[curve]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,sensor,mean_sq,ci_half,bound\n0,0,0.5,0.2,\n");
    }
}
