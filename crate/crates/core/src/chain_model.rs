//! Unit-vector representation of the scheduling chain.
//!
//! The chain has `L` sensor states `S_0..S_{L-1}` (indices `0..L`) and one idle
//! state (index `L`). Every transition is driven by its own Poisson counter,
//! giving `m = 2L` counters. Counter numbering is fixed across the crate:
//!
//! - counter `2s` fires `S_s -> idle` (the *release* counter of sensor `s`);
//! - counter `2s + 1` fires `idle -> S_s` (the *sample* counter of sensor `s`).
//!
//! In one-based numbering the release counters are the odd ones and the
//! sample counters the even ones. A jump through a sample counter is a
//! sampling event for that sensor.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Default tolerance for [`validate_generator`].
pub const DEFAULT_GENERATOR_TOL: f64 = 1e-9;

/// Index of the counter that moves sensor state `sensor` back to idle.
pub const fn release_counter(sensor: usize) -> usize {
    2 * sensor
}

/// Index of the counter that moves idle to sensor state `sensor`.
pub const fn sample_counter(sensor: usize) -> usize {
    2 * sensor + 1
}

/// `(source, target)` states of `counter` in a chain with `sensors` sensors.
pub const fn transition(counter: usize, sensors: usize) -> (usize, usize) {
    let sensor = counter / 2;
    if counter % 2 == 0 {
        (sensor, sensors)
    } else {
        (sensors, sensor)
    }
}

/// Network description: base counter rates, control sensitivities and
/// per-sensor sampling cost weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    sensors: usize,
    base_rates: Vec<f64>,
    alpha: DMatrix<f64>,
    weights: Vec<f64>,
}

impl ChainSpec {
    /// `base_rates` is indexed by counter; `alpha` defaults to the identity.
    pub fn new(base_rates: Vec<f64>, alpha: Option<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self> {
        let sensors = weights.len();
        if sensors == 0 {
            return Err(invalid("at least one sensor is required"));
        }
        let m = 2 * sensors;
        if base_rates.len() != m {
            return Err(invalid(format!(
                "expected {m} base rates for {sensors} sensors, got {}",
                base_rates.len()
            )));
        }
        if let Some((i, r)) = base_rates.iter().enumerate().find(|(_, r)| !(**r >= 0.0) || !r.is_finite()) {
            return Err(invalid(format!("base rate of counter {i} is {r}; rates must be finite and nonnegative")));
        }
        if let Some((s, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid(format!("cost weight of sensor {s} is {w}; weights must be finite and nonnegative")));
        }
        let alpha = alpha.unwrap_or_else(|| DMatrix::identity(m, m));
        if alpha.shape() != (m, m) {
            return Err(invalid(format!(
                "sensitivity matrix must be {m}x{m}, got {}x{}",
                alpha.nrows(),
                alpha.ncols()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(invalid("sensitivity matrix has non-finite entries"));
        }
        Ok(Self {
            sensors,
            base_rates,
            alpha,
            weights,
        })
    }

    /// Builds a spec from per-sensor `idle -> S` and `S -> idle` rates with
    /// identity sensitivities.
    pub fn from_sensor_rates(sample_rates: &[f64], release_rates: &[f64], weights: &[f64]) -> Result<Self> {
        if sample_rates.len() != weights.len() || release_rates.len() != weights.len() {
            return Err(invalid("sample rates, release rates and weights must have one entry per sensor"));
        }
        let mut base = vec![0.0; 2 * weights.len()];
        for s in 0..weights.len() {
            base[release_counter(s)] = release_rates[s];
            base[sample_counter(s)] = sample_rates[s];
        }
        Self::new(base, None, weights.to_vec())
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn states(&self) -> usize {
        self.sensors + 1
    }

    pub fn counters(&self) -> usize {
        2 * self.sensors
    }

    pub fn idle(&self) -> usize {
        self.sensors
    }

    pub fn base_rates(&self) -> &[f64] {
        &self.base_rates
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same chain with all cost weights multiplied by `factor`.
    pub fn with_scaled_weights(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }
}

/// Every matrix needed by the solver and the analysis.
#[derive(Debug, Clone)]
pub struct ChainMatrices {
    pub spec: ChainSpec,
    /// Jump generators `G_i`, one per counter.
    pub generators: Vec<DMatrix<f64>>,
    /// Open-loop generator `A = Σ μ_{i,0} G_i`.
    pub drift: DMatrix<f64>,
    /// `B_i = Σ_j α_{ji} G_j`.
    pub sensitivities: Vec<DMatrix<f64>>,
    /// `m x n` cost matrix `S`; nonzero only in the idle column.
    pub cost_matrix: DMatrix<f64>,
    /// Cost vector `c`; nonzero only at the idle entry.
    pub cost_vector: DVector<f64>,
    /// `(source, target)` of every counter.
    pub transitions: Vec<(usize, usize)>,
}

impl ChainMatrices {
    pub fn sensors(&self) -> usize {
        self.spec.sensors()
    }

    pub fn states(&self) -> usize {
        self.spec.states()
    }

    pub fn counters(&self) -> usize {
        self.spec.counters()
    }
}

pub fn build_generators(sensors: usize) -> Result<Vec<DMatrix<f64>>> {
    if sensors == 0 {
        return Err(invalid("at least one sensor is required"));
    }
    let n = sensors + 1;
    Ok((0..2 * sensors)
        .map(|counter| {
            let (from, to) = transition(counter, sensors);
            let mut g = DMatrix::zeros(n, n);
            g[(to, from)] = 1.0;
            g[(from, from)] = -1.0;
            g
        })
        .collect())
}

pub fn build_matrices(spec: &ChainSpec) -> Result<ChainMatrices> {
    let (l, n, m) = (spec.sensors(), spec.states(), spec.counters());
    let idle = spec.idle();
    let generators = build_generators(l)?;

    let mut drift = DMatrix::zeros(n, n);
    for (g, &mu) in generators.iter().zip(spec.base_rates()) {
        drift += g * mu;
    }
    let check = validate_generator(&drift, DEFAULT_GENERATOR_TOL);
    if !check.is_generator() {
        return Err(Error::GeneratorViolation(format!("open-loop drift: {check}")));
    }

    let alpha = spec.alpha();
    let sensitivities = (0..m)
        .map(|i| {
            let mut b = DMatrix::zeros(n, n);
            for (j, g) in generators.iter().enumerate() {
                let a = alpha[(j, i)];
                if a != 0.0 {
                    b += g * a;
                }
            }
            b
        })
        .collect();

    let mut cost_vector = DVector::zeros(n);
    cost_vector[idle] = (0..l)
        .map(|s| spec.weights()[s] * spec.base_rates()[sample_counter(s)])
        .sum();

    let mut cost_matrix = DMatrix::zeros(m, n);
    for j in 0..m {
        cost_matrix[(j, idle)] = (0..l).map(|s| spec.weights()[s] * alpha[(sample_counter(s), j)]).sum();
    }

    Ok(ChainMatrices {
        spec: spec.clone(),
        generators,
        drift,
        sensitivities,
        cost_matrix,
        cost_vector,
        transitions: (0..m).map(|i| transition(i, l)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorDefect {
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    ColumnSum { col: usize, sum: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneratorCheck {
    pub violations: Vec<GeneratorDefect>,
}

impl GeneratorCheck {
    pub fn is_generator(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for GeneratorCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| match v {
                GeneratorDefect::NegativeOffDiagonal { row, col, value } => {
                    format!("entry ({row},{col}) = {value:e}")
                }
                GeneratorDefect::ColumnSum { col, sum } => format!("column {col} sums to {sum:e}"),
            })
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Checks the column-convention generator conditions: off-diagonal entries
/// `>= -tol` and column sums within `tol` of zero.
pub fn validate_generator(m: &DMatrix<f64>, tol: f64) -> GeneratorCheck {
    assert!(m.is_square(), "generator check requires a square matrix");
    let mut violations = Vec::new();
    for col in 0..m.ncols() {
        let mut sum = 0.0;
        for row in 0..m.nrows() {
            let v = m[(row, col)];
            sum += v;
            if row != col && !(v >= -tol) {
                violations.push(GeneratorDefect::NegativeOffDiagonal { row, col, value: v });
            }
        }
        if !(sum.abs() <= tol) {
            violations.push(GeneratorDefect::ColumnSum { col, sum });
        }
    }
    GeneratorCheck { violations }
}
