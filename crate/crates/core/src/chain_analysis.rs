//! Closed-loop mean dynamics and the analytic average sampling frequencies.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain_model::{sample_counter, validate_generator, ChainMatrices, DEFAULT_GENERATOR_TOL};
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::policy_solver::StationaryPolicy;

/// Stationary quantities of the closed loop.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyReport {
    pub p_inf: Vec<f64>,
    #[serde(skip)]
    pub m_cl: DMatrix<f64>,
    /// Average sampling frequency per sensor.
    pub f: Vec<f64>,
    /// `1/f`, infinite for a sensor that is never sampled.
    pub mean_gap: Vec<f64>,
}

/// `M_cl = A - ½ Σ_i B_i diag(k0ᵀB_i + S_i)`.
pub fn closed_loop_generator(mats: &ChainMatrices, policy: &StationaryPolicy) -> Result<DMatrix<f64>> {
    let mut m_cl = mats.drift.clone();
    for (i, b) in mats.sensitivities.iter().enumerate() {
        // gains row i is already -½(k0ᵀB_i + S_i)
        let mut scaled = b.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= policy.gains[(i, j)];
        }
        m_cl += scaled;
    }
    let check = validate_generator(&m_cl, DEFAULT_GENERATOR_TOL);
    if !check.is_generator() {
        return Err(Error::GeneratorViolation(format!("closed-loop generator: {check}")));
    }
    Ok(m_cl)
}

/// Normalized null vector of a generator.
///
/// A null space of dimension above one (singular values below `1e-8` relative
/// to the largest) means the chain has several closed classes and no unique
/// limit, which is reported as [`Error::NonErgodic`].
pub fn stationary_distribution(m_cl: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m_cl.nrows();
    if n == 0 || !m_cl.is_square() {
        return Err(Error::InvalidSpec("generator must be square and nonempty".into()));
    }
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let sv = m_cl.clone().singular_values();
    let top = sv.max().max(f64::MIN_POSITIVE);
    let null_dim = sv.iter().filter(|&&s| s <= 1e-8 * top).count();
    if null_dim > 1 {
        return Err(Error::NonErgodic(format!("null space of the generator has dimension {null_dim}")));
    }

    let mut aug = DMatrix::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(m_cl);
    aug.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    // Normal equations are fine at these sizes and keep the solve deterministic.
    let normal = aug.tr_mul(&aug);
    let p = normal
        .cholesky()
        .map(|c| c.solve(&aug.tr_mul(&rhs)))
        .or_else(|| aug.clone().svd(true, true).solve(&rhs, 1e-14).ok())
        .ok_or_else(|| Error::Numerical("stationary least-squares solve failed".into()))?;

    let mut p = p.map(|v| if v < 0.0 && v > -1e-12 { 0.0 } else { v });
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::Numerical("stationary distribution has negative entries".into()));
    }
    let total = p.sum();
    p /= total;
    Ok(p)
}

/// Average sampling frequencies: the effective idle→S rate times the
/// stationary idle probability.
pub fn sampling_frequencies(
    mats: &ChainMatrices,
    policy: &StationaryPolicy,
    p_inf: &DVector<f64>,
) -> Result<FrequencyReport> {
    let m_cl = closed_loop_generator(mats, policy)?;
    let idle = mats.spec.idle();
    let f: Vec<f64> = (0..mats.sensors())
        .map(|s| (policy.eff_rates[(sample_counter(s), idle)] * p_inf[idle]).max(0.0))
        .collect();
    let mean_gap = f.iter().map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY }).collect();
    Ok(FrequencyReport {
        p_inf: p_inf.iter().copied().collect(),
        m_cl,
        f,
        mean_gap,
    })
}

/// Closed loop, stationary law and frequencies in one call.
pub fn analyze(mats: &ChainMatrices, policy: &StationaryPolicy) -> Result<FrequencyReport> {
    let m_cl = closed_loop_generator(mats, policy)?;
    let p = stationary_distribution(&m_cl)?;
    sampling_frequencies(mats, policy, &p)
}

/// `p(t) = e^{M_cl t} p(0)`.
pub fn transient_distribution(m_cl: &DMatrix<f64>, p0: &DVector<f64>, t: f64) -> DVector<f64> {
    expm(&(m_cl * t)) * p0
}
