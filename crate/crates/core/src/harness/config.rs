//! JSON scenario description.
//!
//! A config is a single JSON object. Unknown keys are rejected at every
//! level. Fields not needed by a scenario kind may be omitted; `validate`
//! checks that the ones it needs are present and consistent.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain_model::{release_counter, sample_counter, ChainSpec};
use crate::controllers::{ControllerSpec, CoupledRing, StepDisturbance};
use crate::error::{Error, Result};
use crate::plant_models::{LinearPlant, ScalarPlant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Scalar OU plants with the hold-and-decay predictor.
    EstimationScalar,
    /// Vector plants with noisy full-state samples and the matrix predictor.
    EstimationVector,
    /// Vector plants with output samples and a Kalman filter on one fixed schedule.
    EstimationKalman,
    /// Scalar plants under an impulsive, pulse or exponential controller.
    Control,
    /// Held-sample PI control of a ring of coupled integrators.
    CoupledPi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// `idle -> S` base rate per sensor.
    pub sample_rates: Vec<f64>,
    /// `S -> idle` base rate per sensor.
    pub release_rates: Vec<f64>,
    /// Sampling cost per sensor.
    pub weights: Vec<f64>,
    /// Optional `2L x 2L` sensitivity matrix, rows indexed by counter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantConfig {
    Scalar { gamma: f64, sigma: f64, eta: f64 },
    /// Matrices given row by row.
    Linear {
        a: Vec<Vec<f64>>,
        h: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
    },
}

/// A time window with its own active sensors and, optionally, its own weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub start: f64,
    pub end: f64,
    /// Global sensor indices, 0-based.
    pub active: Vec<usize>,
    /// Weights for all sensors; defaults to the chain weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub chain: ChainConfig,
    #[serde(default)]
    pub plants: Vec<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSpec>,
    pub horizon: f64,
    pub replicates: usize,
    pub grid_dt: f64,
    pub seed: u64,
    /// Empty means one phase over `[0, horizon]` with every sensor active.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<PhaseConfig>,
    /// Replace the chain by a periodic schedule at the analytic frequencies
    /// (the largest-demand phase when there are several).
    #[serde(default)]
    pub periodic: bool,
    /// Time excluded from pass/fail after each phase start; defaults to `2/f`
    /// per sensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    /// Length of the single chain run used for gap statistics of the pulse and
    /// exponential bounds.
    #[serde(default = "default_stats_horizon")]
    pub stats_horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<CoupledRing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<StepDisturbance>,
    /// Subsystem whose settling is checked before `settle_by`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle: Option<SettleCheck>,
}

/// `|z_subsystem(t)| <= tolerance` for every grid time in `[by - window, by)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettleCheck {
    pub subsystem: usize,
    pub by: f64,
    pub window: f64,
    pub tolerance: f64,
}

fn default_stats_horizon() -> f64 {
    1e4
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(cfg_err(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sensors(&self) -> usize {
        self.chain.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.sensors();
        if l == 0 {
            return Err(cfg_err("chain needs at least one sensor"));
        }
        if self.chain.sample_rates.len() != l || self.chain.release_rates.len() != l {
            return Err(cfg_err("sample_rates, release_rates and weights must have equal length"));
        }
        if self.replicates < 1 {
            return Err(cfg_err("replicates must be at least 1"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(cfg_err("horizon must be positive and finite"));
        }
        if !(self.grid_dt > 0.0) || self.grid_dt > self.horizon {
            return Err(cfg_err("grid_dt must be positive and not exceed the horizon"));
        }
        if self.warmup.is_some_and(|w| !(w >= 0.0)) {
            return Err(cfg_err("warmup must be nonnegative"));
        }
        if !(self.stats_horizon > 0.0) {
            return Err(cfg_err("stats_horizon must be positive"));
        }
        self.validate_phases()?;
        // Builds everything once so errors surface before any simulation.
        self.base_spec()?;
        match self.kind {
            ScenarioKind::CoupledPi => {
                let ring = self.ring.ok_or_else(|| cfg_err("coupled-pi needs `ring`"))?;
                if ring.size != l {
                    return Err(cfg_err(format!("ring size {} differs from {l} sensors", ring.size)));
                }
                match self.controller {
                    Some(ControllerSpec::Pi { .. }) => {}
                    _ => return Err(cfg_err("coupled-pi needs a `pi` controller")),
                }
                if let Some(s) = self.settle {
                    if s.subsystem >= l || !(s.window > 0.0) || !(s.tolerance > 0.0) {
                        return Err(cfg_err("settle check is out of range"));
                    }
                }
            }
            _ => {
                if self.plants.len() != l {
                    return Err(cfg_err(format!("{} plants for {l} sensors", self.plants.len())));
                }
                match self.kind {
                    ScenarioKind::EstimationScalar | ScenarioKind::Control => {
                        self.scalar_plants()?;
                    }
                    _ => {
                        self.linear_plants()?;
                    }
                }
                if self.kind == ScenarioKind::Control {
                    let ctrl = self.controller.ok_or_else(|| cfg_err("control needs `controller`"))?;
                    if matches!(ctrl, ControllerSpec::Pi { .. }) {
                        return Err(cfg_err("PI control belongs to the coupled-pi kind"));
                    }
                    for p in self.scalar_plants()? {
                        ctrl.validate(p.gamma)?;
                    }
                }
                if self.kind == ScenarioKind::EstimationKalman && self.periodic {
                    return Err(cfg_err("the Kalman scenario runs on one sampled chain schedule"));
                }
            }
        }
        Ok(())
    }

    fn validate_phases(&self) -> Result<()> {
        let l = self.sensors();
        let mut t = 0.0;
        for (i, p) in self.phases.iter().enumerate() {
            if (p.start - t).abs() > 1e-12 || !(p.end > p.start) {
                return Err(cfg_err(format!("phase {i} does not continue the partition of [0, horizon]")));
            }
            if p.active.is_empty() {
                return Err(cfg_err(format!("phase {i} has no active sensors")));
            }
            let mut seen = vec![false; l];
            for &s in &p.active {
                if s >= l || std::mem::replace(&mut seen[s], true) {
                    return Err(cfg_err(format!("phase {i} lists sensor {s} twice or out of range")));
                }
            }
            if p.weights.as_ref().is_some_and(|w| w.len() != l) {
                return Err(cfg_err(format!("phase {i} weights must cover all {l} sensors")));
            }
            t = p.end;
        }
        if !self.phases.is_empty() && (t - self.horizon).abs() > 1e-9 {
            return Err(cfg_err("phases must end at the horizon"));
        }
        Ok(())
    }

    /// Phases with defaults filled in.
    pub fn effective_phases(&self) -> Vec<PhaseConfig> {
        if self.phases.is_empty() {
            vec![PhaseConfig {
                start: 0.0,
                end: self.horizon,
                active: (0..self.sensors()).collect(),
                weights: None,
            }]
        } else {
            self.phases.clone()
        }
    }

    fn alpha(&self) -> Result<Option<DMatrix<f64>>> {
        self.chain.alpha.as_deref().map(|a| matrix(a, "alpha")).transpose()
    }

    /// Chain over every sensor with the top-level weights.
    pub fn base_spec(&self) -> Result<ChainSpec> {
        let all: Vec<usize> = (0..self.sensors()).collect();
        self.phase_spec(&all, &self.chain.weights)
    }

    /// Chain restricted to `active` sensors, renumbered in the listed order.
    pub fn phase_spec(&self, active: &[usize], weights: &[f64]) -> Result<ChainSpec> {
        let m = 2 * active.len();
        let mut base = vec![0.0; m];
        let mut global_counter = vec![0; m];
        for (local, &g) in active.iter().enumerate() {
            base[release_counter(local)] = self.chain.release_rates[g];
            base[sample_counter(local)] = self.chain.sample_rates[g];
            global_counter[release_counter(local)] = release_counter(g);
            global_counter[sample_counter(local)] = sample_counter(g);
        }
        let alpha = self
            .alpha()?
            .map(|full| {
                let n = 2 * self.sensors();
                if full.shape() != (n, n) {
                    return Err(cfg_err(format!("alpha must be {n}x{n}")));
                }
                Ok(DMatrix::from_fn(m, m, |i, j| full[(global_counter[i], global_counter[j])]))
            })
            .transpose()?;
        let w = active.iter().map(|&g| weights[g]).collect();
        ChainSpec::new(base, alpha, w)
    }

    pub fn scalar_plants(&self) -> Result<Vec<ScalarPlant>> {
        self.plants
            .iter()
            .map(|p| match *p {
                PlantConfig::Scalar { gamma, sigma, eta } => ScalarPlant::new(gamma, sigma, eta),
                PlantConfig::Linear { .. } => Err(cfg_err("this scenario needs scalar plants")),
            })
            .collect()
    }

    pub fn linear_plants(&self) -> Result<Vec<LinearPlant>> {
        self.plants
            .iter()
            .map(|p| match p {
                PlantConfig::Scalar { .. } => Err(cfg_err("this scenario needs linear plants")),
                PlantConfig::Linear { a, h, c, r } => {
                    LinearPlant::new(matrix(a, "a")?, matrix(h, "h")?, matrix(c, "c")?, matrix(r, "r")?)
                }
            })
            .collect()
    }
}

/// Row-major nested vectors from a matrix, for building configs in code.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin::builtin;

    #[test]
    fn builtin_configs_round_trip() {
        for name in crate::harness::builtin::BUILTIN_NAMES {
            let cfg = builtin(name).unwrap();
            let text = cfg.to_json().unwrap();
            let back = ScenarioConfig::from_json(&text).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&builtin("estimation-scalar").unwrap().to_json().unwrap()).unwrap();
        v["surprise"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        v.as_object_mut().unwrap().remove("surprise");
        v["chain"]["extra"] = serde_json::json!(true);
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn phase_partition_checked() {
        let mut cfg = builtin("adhoc-churn-small").unwrap();
        cfg.phases[1].start += 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = builtin("adhoc-churn-small").unwrap();
        cfg.phases[0].active.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = builtin("adhoc-churn-small").unwrap();
        cfg.phases.last_mut().unwrap().end = 100.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_replicates_rejected() {
        let mut cfg = builtin("estimation-scalar").unwrap();
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn phase_spec_restricts_alpha() {
        let mut cfg = builtin("estimation-scalar").unwrap();
        let n = 4;
        cfg.chain.alpha = Some((0..n).map(|i| (0..n).map(|j| (10 * i + j) as f64).collect()).collect());
        let spec = cfg.phase_spec(&[1], &cfg.chain.weights.clone()).unwrap();
        // local counters 0,1 map to global counters 2,3
        assert_eq!(spec.alpha()[(0, 0)], 22.0);
        assert_eq!(spec.alpha()[(0, 1)], 23.0);
        assert_eq!(spec.alpha()[(1, 0)], 32.0);
        assert_eq!(spec.weights(), &[0.1]);
    }
}
