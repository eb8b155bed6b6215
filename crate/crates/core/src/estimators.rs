//! Hold-and-predict estimators, the irregular-sampling Kalman filter, and the
//! analytic error-variance bounds that depend on the sampling frequency.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, lyapunov, symmetrize};
use crate::plant_models::{DiscretizedStep, LinearPlant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundRegime {
    LowNoise,
    HighNoise,
    Matrix,
    KalmanConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationBound {
    pub value: f64,
    pub regime: BoundRegime,
    /// Parameters the value was computed from.
    pub inputs: Vec<(&'static str, f64)>,
}

/// `g(t) = c1·e^{-2γt} + (c2/2γ)(1 - e^{-2γt})`; non-decreasing and concave
/// whenever `2γ c1 <= c2`.
pub fn lemma_g(c1: f64, c2: f64, gamma: f64, t: f64) -> f64 {
    let decay = (-2.0 * gamma * t).exp();
    c1 * decay + c2 / (2.0 * gamma) * (1.0 - decay)
}

/// `e^{-γ·elapsed}·y`.
pub fn scalar_predictor(last_y: f64, elapsed: f64, gamma: f64) -> f64 {
    (-gamma * elapsed).exp() * last_y
}

/// `e^{A·elapsed}·y`.
pub fn vector_predictor(last_y: &DVector<f64>, elapsed: f64, a: &DMatrix<f64>) -> DVector<f64> {
    expm(&(a * elapsed)) * last_y
}

fn check_frequency(f: f64) -> Result<()> {
    if f.is_nan() || f < 0.0 {
        return Err(invalid(format!("sampling frequency must be nonnegative, got {f}")));
    }
    Ok(())
}

/// Noise threshold `σ/sqrt(2γ)` separating the two scalar regimes.
pub fn noise_threshold(gamma: f64, sigma: f64) -> f64 {
    (1.0 / (2.0 * gamma)).sqrt() * sigma
}

/// Scalar predictor bound.
///
/// Low noise (`η <= σ/sqrt(2γ)`): `η²e^{-2γ/f} + (σ²/2γ)(1 - e^{-2γ/f})`.
/// High noise: `η² + (σ²/2γ)(1 - e^{-2γ/f})`.
/// `f = 0` reads as an infinite mean gap and `f = ∞` as a zero one.
pub fn bound_scalar_estimation(gamma: f64, sigma: f64, eta: f64, f: f64) -> Result<EstimationBound> {
    if !(gamma > 0.0) {
        return Err(invalid(format!("decay rate must be positive, got {gamma}")));
    }
    check_frequency(f)?;
    let decay = (-2.0 * gamma / f).exp();
    let drift = sigma * sigma / (2.0 * gamma) * (1.0 - decay);
    let (value, regime) = if eta <= noise_threshold(gamma, sigma) {
        (eta * eta * decay + drift, BoundRegime::LowNoise)
    } else {
        (eta * eta + drift, BoundRegime::HighNoise)
    };
    Ok(EstimationBound {
        value,
        regime,
        inputs: vec![("gamma", gamma), ("sigma", sigma), ("eta", eta), ("f", f)],
    })
}

fn require_contractive(plant: &LinearPlant) -> Result<f64> {
    let lam = plant.lambda_bar();
    if !(lam < 0.0) {
        return Err(Error::BoundInapplicable(format!(
            "largest eigenvalue of A + Aᵀ is {lam}, the bound needs it negative"
        )));
    }
    Ok(lam)
}

/// `trace(R) + trace(HᵀH)/|λ̄| · (1 - e^{λ̄/f})` for state measurements.
pub fn bound_state_estimation(plant: &LinearPlant, f: f64) -> Result<EstimationBound> {
    check_frequency(f)?;
    let lam = require_contractive(plant)?;
    let value = plant.r().trace() + plant.diffusion_trace() / lam.abs() * (1.0 - (lam / f).exp());
    Ok(EstimationBound {
        value,
        regime: BoundRegime::Matrix,
        inputs: vec![("lambda_bar", lam), ("f", f)],
    })
}

/// Posterior of the sampled Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub t: f64,
}

impl KalmanState {
    /// Zero mean with the open-loop stationary covariance as prior, which
    /// over-covers a plant started at rest.
    pub fn stationary_prior(plant: &LinearPlant) -> Result<Self> {
        let w = plant.h() * plant.h().transpose();
        let p = lyapunov(plant.a(), &w)?;
        if p.symmetric_eigenvalues().min() < -1e-10 {
            return Err(Error::Numerical("open-loop plant has no stationary covariance".into()));
        }
        Ok(Self {
            x_hat: DVector::zeros(plant.dim()),
            p,
            t: 0.0,
        })
    }
}

/// Time update only.
pub fn kalman_predict(state: &KalmanState, step: &DiscretizedStep) -> KalmanState {
    KalmanState {
        x_hat: &step.f * &state.x_hat,
        p: symmetrize(&(&step.f * &state.p * step.f.transpose() + &step.q)),
        t: state.t + step.dt,
    }
}

/// One predict/update cycle with a Joseph-form covariance update.
pub fn kalman_step(
    state: &KalmanState,
    step: &DiscretizedStep,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<KalmanState> {
    let prior = kalman_predict(state, step);
    let d = prior.x_hat.len();
    if c.ncols() != d || c.nrows() != y.len() || r.shape() != (y.len(), y.len()) {
        return Err(invalid("dimension mismatch in Kalman update"));
    }
    let s = symmetrize(&(c * &prior.p * c.transpose() + r));
    let min_eig = s.symmetric_eigenvalues().min();
    if !(min_eig > 1e-12) {
        return Err(Error::Numerical(format!(
            "innovation covariance is singular (smallest eigenvalue {min_eig:e})"
        )));
    }
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?
        .inverse();
    let gain = &prior.p * c.transpose() * s_inv;
    let innovation = y - c * &prior.x_hat;
    let x_hat = &prior.x_hat + &gain * innovation;
    let i_kc = DMatrix::identity(d, d) - &gain * c;
    let p = &i_kc * &prior.p * i_kc.transpose() + &gain * r * gain.transpose();
    Ok(KalmanState {
        x_hat,
        p: symmetrize(&p),
        t: prior.t,
    })
}

/// Conditional bound for `t` in `[T_i, T_i + gap)`:
/// `trace(P) + trace(HᵀH)/|λ̄| · (1 - e^{λ̄·gap})`.
pub fn kalman_intersample_bound(p_trace: f64, plant: &LinearPlant, gap: f64) -> Result<EstimationBound> {
    if gap.is_nan() || gap < 0.0 {
        return Err(invalid(format!("gap must be nonnegative, got {gap}")));
    }
    let lam = require_contractive(plant)?;
    let value = p_trace + plant.diffusion_trace() / lam.abs() * (1.0 - (lam * gap).exp());
    Ok(EstimationBound {
        value,
        regime: BoundRegime::KalmanConditional,
        inputs: vec![("trace_p", p_trace), ("lambda_bar", lam), ("gap", gap)],
    })
}
