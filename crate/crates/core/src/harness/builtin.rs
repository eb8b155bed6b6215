//! Ready-made configs for the standard experiments.

use nalgebra::DMatrix;

use super::config::{rows, ChainConfig, PhaseConfig, PlantConfig, ScenarioConfig, ScenarioKind, SettleCheck};
use crate::controllers::{ControllerSpec, CoupledRing, StepDisturbance};
use crate::error::{Error, Result};
use crate::plant_models::{two_tank_drift, water_tank_gamma};

pub const BUILTIN_NAMES: [&str; 11] = [
    "estimation-scalar",
    "estimation-scalar-periodic",
    "estimation-vector",
    "estimation-kalman",
    "adhoc-churn",
    "adhoc-churn-small",
    "control-impulsive",
    "control-pulse",
    "control-exponential",
    "coupled-pi",
    "coupled-pi-periodic",
];

const GRAVITY: f64 = 9.8;
const DEFAULT_SEED: u64 = 20_140_501;

fn two_sensor_chain() -> ChainConfig {
    ChainConfig {
        sample_rates: vec![1.0, 1.0],
        release_rates: vec![10.0, 10.0],
        weights: vec![0.5, 0.1],
        alpha: None,
    }
}

fn tank_plants() -> Vec<PlantConfig> {
    [(0.7, 1.0, 0.3), (0.3, 1.0, 0.3)]
        .into_iter()
        .map(|(gamma, sigma, eta)| PlantConfig::Scalar { gamma, sigma, eta })
        .collect()
}

/// Two serial tanks per subsystem; `output` selects the bottom-level sensor.
fn two_tank_plants(output: bool) -> Result<Vec<PlantConfig>> {
    let g1 = water_tank_gamma(0.20, 1.0, 0.40, GRAVITY)?;
    let g2 = water_tank_gamma(0.10, 1.0, 0.54, GRAVITY)?;
    let eye = DMatrix::<f64>::identity(2, 2);
    Ok([g1, g2]
        .into_iter()
        .map(|g| {
            let (c, r) = if output {
                (DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), DMatrix::from_element(1, 1, 0.09))
            } else {
                (eye.clone(), &eye * 0.09)
            };
            PlantConfig::Linear {
                a: rows(&two_tank_drift(g, g)),
                h: rows(&eye),
                c: rows(&c),
                r: rows(&r),
            }
        })
        .collect())
}

fn base(name: &str, kind: ScenarioKind, chain: ChainConfig, plants: Vec<PlantConfig>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        kind,
        chain,
        plants,
        controller: None,
        horizon: 20.0,
        replicates: 1000,
        grid_dt: 0.05,
        seed: DEFAULT_SEED,
        phases: Vec::new(),
        periodic: false,
        warmup: None,
        stats_horizon: 1e4,
        ring: None,
        disturbances: Vec::new(),
        settle: None,
    }
}

fn churn(name: &str, sensors: usize, phase_sizes: [usize; 3]) -> ScenarioConfig {
    let chain = ChainConfig {
        sample_rates: vec![10.0; sensors],
        release_rates: vec![50.0; sensors],
        weights: vec![0.1; sensors],
        alpha: None,
    };
    let plants = vec![PlantConfig::Scalar { gamma: 0.3, sigma: 1.0, eta: 0.3 }; sensors];
    let mut cfg = base(name, ScenarioKind::EstimationScalar, chain, plants);
    cfg.horizon = 15.0;
    cfg.replicates = 200;
    cfg.phases = phase_sizes
        .iter()
        .enumerate()
        .map(|(i, &k)| PhaseConfig {
            start: 5.0 * i as f64,
            end: 5.0 * (i + 1) as f64,
            active: (0..k).collect(),
            weights: None,
        })
        .collect();
    cfg
}

/// Cheap sampling for the disturbed subsystem, medium for its neighbours.
fn focus_weights(sensors: usize, focus: usize) -> Vec<f64> {
    let mut w = vec![30.0; sensors];
    w[focus] = 10.0;
    w[(focus + sensors - 1) % sensors] = 20.0;
    w[(focus + 1) % sensors] = 20.0;
    w
}

fn coupled(name: &str, periodic: bool) -> ScenarioConfig {
    let l = 70;
    let chain = ChainConfig {
        sample_rates: vec![10.0; l],
        release_rates: vec![70.0; l],
        weights: vec![10.0; l],
        alpha: None,
    };
    let mut cfg = base(name, ScenarioKind::CoupledPi, chain, Vec::new());
    cfg.horizon = 30.0;
    cfg.replicates = 200;
    cfg.controller = Some(ControllerSpec::Pi { kp: -1.2, ki: -0.3 });
    cfg.ring = Some(CoupledRing { size: l, coupling: 0.1 });
    cfg.disturbances = vec![
        StepDisturbance { subsystem: 3, amplitude: 1.0, start: 0.0 },
        StepDisturbance { subsystem: 25, amplitude: -0.4, start: 15.0 },
    ];
    cfg.settle = Some(SettleCheck {
        subsystem: 3,
        by: 15.0,
        // the last grid point before the switch
        window: 0.05,
        tolerance: 0.05,
    });
    if periodic {
        // Worst case: every subsystem disturbed, so every weight is low.
        cfg.periodic = true;
    } else {
        cfg.phases = vec![
            PhaseConfig {
                start: 0.0,
                end: 15.0,
                active: (0..l).collect(),
                weights: Some(focus_weights(l, 3)),
            },
            PhaseConfig {
                start: 15.0,
                end: 30.0,
                active: (0..l).collect(),
                weights: Some(focus_weights(l, 25)),
            },
        ];
    }
    cfg
}

/// Config for a named experiment.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let cfg = match name {
        "estimation-scalar" => base(name, ScenarioKind::EstimationScalar, two_sensor_chain(), tank_plants()),
        "estimation-scalar-periodic" => {
            let mut c = base(name, ScenarioKind::EstimationScalar, two_sensor_chain(), tank_plants());
            c.periodic = true;
            c
        }
        "estimation-vector" => base(name, ScenarioKind::EstimationVector, two_sensor_chain(), two_tank_plants(false)?),
        "estimation-kalman" => base(name, ScenarioKind::EstimationKalman, two_sensor_chain(), two_tank_plants(true)?),
        "adhoc-churn" => churn(name, 70, [30, 70, 10]),
        "adhoc-churn-small" => churn(name, 7, [3, 7, 1]),
        "control-impulsive" | "control-pulse" | "control-exponential" => {
            let mut c = base(name, ScenarioKind::Control, two_sensor_chain(), tank_plants());
            c.controller = Some(match name {
                "control-impulsive" => ControllerSpec::Impulsive,
                "control-pulse" => ControllerSpec::Pulse { rho: 0.1 },
                _ => ControllerSpec::Exponential { theta: 10.0 },
            });
            c
        }
        "coupled-pi" => coupled(name, false),
        "coupled-pi-periodic" => coupled(name, true),
        other => {
            return Err(Error::Config(format!(
                "unknown scenario `{other}`; built-ins are {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
