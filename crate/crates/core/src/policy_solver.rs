//! Optimal rate control: the finite-horizon backward equation for `k(t)` and
//! the stationary system for `(k0, ϱ)`.
//!
//! Both problems share the quadratic map
//!
//! ```text
//! q(k) = ¼ Σ_i (S_iᵀ + B_iᵀ k)²        (elementwise square)
//! ```
//!
//! Finite horizon: `k̇ = -c - Aᵀk + q(k)`, `k(T) = k_f`.
//! Stationary: `Aᵀk0 - ϱ1 - q(k0) + c = 0` with `1ᵀk0` pinned.
//!
//! The feedback gain of counter `i` is `K_i = -½(k0ᵀB_i + S_i)`; in state `e_j`
//! counter `i` then fires at `μ_{i,0} + Σ_l α_{il} K[l, j]`.

use nalgebra::{DMatrix, DVector};

use crate::chain_model::{ChainMatrices, DEFAULT_GENERATOR_TOL};
use crate::error::{invalid, Error, Result};

/// Default number of RK4 steps over the whole horizon.
pub const DEFAULT_ODE_STEPS: usize = 10_000;

fn sensitivity_terms(mats: &ChainMatrices, k: &DVector<f64>) -> Vec<DVector<f64>> {
    mats.sensitivities
        .iter()
        .enumerate()
        .map(|(i, b)| b.tr_mul(k) + mats.cost_matrix.row(i).transpose())
        .collect()
}

fn quadratic_term(terms: &[DVector<f64>], n: usize) -> DVector<f64> {
    let mut q = DVector::zeros(n);
    for v in terms {
        q += v.component_mul(v) * 0.25;
    }
    q
}

fn gain_matrix(terms: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(terms.len(), n);
    for (i, v) in terms.iter().enumerate() {
        k.set_row(i, &(v.transpose() * -0.5));
    }
    k
}

/// Effective rate matrix `μ_{i,0} + (αK)[i, j]`.
fn effective_rates(mats: &ChainMatrices, gains: &DMatrix<f64>) -> DMatrix<f64> {
    let mut eff = mats.spec.alpha() * gains;
    for (i, &mu) in mats.spec.base_rates().iter().enumerate() {
        eff.row_mut(i).add_scalar_mut(mu);
    }
    eff
}

/// Solution of the backward equation on a uniform grid.
#[derive(Debug, Clone)]
pub struct FiniteHorizonPolicy {
    pub grid: Vec<f64>,
    /// `k(t_j)` for every grid point; the last entry is the terminal condition.
    pub k_traj: Vec<DVector<f64>>,
    pub k_f: DVector<f64>,
    /// `k(0)ᵀ E{x(0)} / T` with `E{x(0)} = e_idle`.
    pub cost_j: f64,
}

impl FiniteHorizonPolicy {
    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid is never empty")
    }

    /// Predicted cost for a different initial distribution.
    pub fn cost_with_initial(&self, mean_x0: &DVector<f64>) -> f64 {
        self.k_traj[0].dot(mean_x0) / self.horizon()
    }

    /// Gain matrix `-½(k(t_j)ᵀB_i + S_i)` at grid index `j`.
    pub fn gains_at(&self, mats: &ChainMatrices, j: usize) -> DMatrix<f64> {
        let terms = sensitivity_terms(mats, &self.k_traj[j]);
        gain_matrix(&terms, mats.states())
    }
}

/// Integrates `k̇ = -c(t) - Aᵀk + q(k)` backward from `k(T) = k_f` with
/// fixed-step RK4.
pub fn solve_k_ode<F>(
    mats: &ChainMatrices,
    cost: F,
    k_f: &DVector<f64>,
    horizon: f64,
    steps: usize,
) -> Result<FiniteHorizonPolicy>
where
    F: Fn(f64) -> DVector<f64>,
{
    let n = mats.states();
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(invalid("at least one integration step is required"));
    }
    if k_f.len() != n {
        return Err(invalid(format!("terminal condition has length {}, expected {n}", k_f.len())));
    }
    let at = mats.drift.transpose();
    let rhs = |t: f64, k: &DVector<f64>| -> DVector<f64> {
        let terms = sensitivity_terms(mats, k);
        quadratic_term(&terms, n) - cost(t) - &at * k
    };

    let h = horizon / steps as f64;
    let grid: Vec<f64> = (0..=steps).map(|j| if j == steps { horizon } else { j as f64 * h }).collect();
    let mut traj = vec![DVector::zeros(n); steps + 1];
    traj[steps] = k_f.clone();
    let mut k = k_f.clone();
    for j in (0..steps).rev() {
        let t = grid[j + 1];
        // stepping with -h
        let k1 = rhs(t, &k);
        let k2 = rhs(t - 0.5 * h, &(&k - &k1 * (0.5 * h)));
        let k3 = rhs(t - 0.5 * h, &(&k - &k2 * (0.5 * h)));
        let k4 = rhs(t - h, &(&k - &k3 * h));
        k -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: grid[j] });
        }
        traj[j] = k.clone();
    }

    let cost_j = traj[0][mats.spec.idle()] / horizon;
    Ok(FiniteHorizonPolicy {
        grid,
        k_traj: traj,
        k_f: k_f.clone(),
        cost_j,
    })
}

/// Time-invariant cost vector `c`, for use with [`solve_k_ode`].
pub fn constant_cost(mats: &ChainMatrices) -> impl Fn(f64) -> DVector<f64> + '_ {
    move |_| mats.cost_vector.clone()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    /// Convergence threshold on the residual ∞-norm, relative to `max(1, ‖c‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Effective rates down to `-rate_tol` are accepted as zero.
    pub rate_tol: f64,
    /// Right-hand side of the normalization row `1ᵀk0 = target`.
    pub normalization: f64,
    /// Fall back to continuation in the cost scale when plain Newton fails.
    pub continuation: bool,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            rate_tol: DEFAULT_GENERATOR_TOL,
            normalization: 0.0,
            continuation: true,
        }
    }
}

/// Solved infinite-horizon policy.
#[derive(Debug, Clone)]
pub struct StationaryPolicy {
    pub k0: DVector<f64>,
    /// Predicted long-run average cost.
    pub rho: f64,
    /// `m x n` gain matrix `K`.
    pub gains: DMatrix<f64>,
    /// `m x n` effective counter rates per state.
    pub eff_rates: DMatrix<f64>,
    /// Residual ∞-norm at the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// True when the zero start failed and continuation produced the root.
    pub used_continuation: bool,
    pub transitions: Vec<(usize, usize)>,
    pub sensors: usize,
}

impl StationaryPolicy {
    pub fn states(&self) -> usize {
        self.sensors + 1
    }

    pub fn idle(&self) -> usize {
        self.sensors
    }

    /// Rate of counter `i` in its source state.
    pub fn active_rate(&self, counter: usize) -> f64 {
        self.eff_rates[(counter, self.transitions[counter].0)].max(0.0)
    }
}

struct Residual {
    value: DVector<f64>,
    terms: Vec<DVector<f64>>,
}

/// Cost terms scaled by `s`; `s = 1` is the real problem.
struct Scaled<'a> {
    mats: &'a ChainMatrices,
    s: f64,
}

impl Scaled<'_> {
    fn terms(&self, k: &DVector<f64>) -> Vec<DVector<f64>> {
        self.mats
            .sensitivities
            .iter()
            .enumerate()
            .map(|(i, b)| b.tr_mul(k) + self.mats.cost_matrix.row(i).transpose() * self.s)
            .collect()
    }

    fn residual(&self, x: &DVector<f64>, target: f64) -> Residual {
        let n = self.mats.states();
        let k = x.rows(0, n).into_owned();
        let rho = x[n];
        let terms = self.terms(&k);
        let q = quadratic_term(&terms, n);
        let head = self.mats.drift.tr_mul(&k) - q + &self.mats.cost_vector * self.s
            - DVector::from_element(n, rho);
        let mut value = DVector::zeros(n + 1);
        value.rows_mut(0, n).copy_from(&head);
        value[n] = k.sum() - target;
        Residual { value, terms }
    }

    fn jacobian(&self, terms: &[DVector<f64>]) -> DMatrix<f64> {
        let n = self.mats.states();
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        let mut top = self.mats.drift.transpose();
        for (v, b) in terms.iter().zip(&self.mats.sensitivities) {
            // diag(v) Bᵀ
            let mut scaled = b.transpose();
            for (r, &vr) in v.iter().enumerate() {
                scaled.row_mut(r).scale_mut(vr);
            }
            top -= scaled * 0.5;
        }
        jac.view_mut((0, 0), (n, n)).copy_from(&top);
        for r in 0..n {
            jac[(r, n)] = -1.0;
            jac[(n, r)] = 1.0;
        }
        jac
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton; returns `(x, residual, iterations)` or the last residual.
fn newton(
    problem: &Scaled<'_>,
    start: DVector<f64>,
    opts: &StationaryOptions,
    tol: f64,
) -> std::result::Result<(DVector<f64>, f64, usize), (usize, f64)> {
    let mut x = start;
    let mut res = problem.residual(&x, opts.normalization);
    let mut norm = inf_norm(&res.value);
    for iter in 0..opts.max_iter {
        if norm <= tol {
            return Ok((x, norm, iter));
        }
        let jac = problem.jacobian(&res.terms);
        let Some(dx) = jac.lu().solve(&res.value) else {
            return Err((iter, norm));
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x - &dx * step;
            let trial_res = problem.residual(&trial, opts.normalization);
            let trial_norm = inf_norm(&trial_res.value);
            if trial_norm.is_finite() && trial_norm < norm {
                x = trial;
                res = trial_res;
                norm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err((iter, norm));
        }
    }
    if norm <= tol {
        Ok((x, norm, opts.max_iter))
    } else {
        Err((opts.max_iter, norm))
    }
}

fn rate_violations(mats: &ChainMatrices, eff: &DMatrix<f64>, rate_tol: f64) -> Vec<(usize, usize, f64)> {
    mats.transitions
        .iter()
        .enumerate()
        .filter_map(|(i, &(src, _))| {
            let r = eff[(i, src)];
            (!(r >= -rate_tol)).then_some((i, src, r))
        })
        .collect()
}

fn assemble(
    mats: &ChainMatrices,
    x: &DVector<f64>,
    residual: f64,
    iterations: usize,
    used_continuation: bool,
) -> StationaryPolicy {
    let n = mats.states();
    let k0 = x.rows(0, n).into_owned();
    let terms = sensitivity_terms(mats, &k0);
    let gains = gain_matrix(&terms, n);
    let eff_rates = effective_rates(mats, &gains);
    StationaryPolicy {
        k0,
        rho: x[n],
        gains,
        eff_rates,
        residual,
        iterations,
        used_continuation,
        transitions: mats.transitions.clone(),
        sensors: mats.sensors(),
    }
}

/// Stationary solve with default options.
pub fn solve_stationary(mats: &ChainMatrices) -> Result<StationaryPolicy> {
    solve_stationary_with(mats, &StationaryOptions::default())
}

/// Newton on the `(n+1)`-dimensional stationary system from the zero start.
///
/// For large cost weights the zero start can land on a root whose effective
/// rates are negative. When that happens, or Newton stalls, the cost terms are
/// scaled by `s` and the root is tracked from `s = 0` (where it is zero) up to
/// `s = 1`, warm-starting each solve from the previous one.
pub fn solve_stationary_with(mats: &ChainMatrices, opts: &StationaryOptions) -> Result<StationaryPolicy> {
    let n = mats.states();
    let scale = inf_norm(&mats.cost_vector).max(1.0);
    let tol = opts.tol * scale;

    if mats.cost_vector.iter().all(|&v| v == 0.0) && mats.cost_matrix.iter().all(|&v| v == 0.0) {
        // The zero point solves the system exactly.
        let mut x = DVector::zeros(n + 1);
        if opts.normalization != 0.0 {
            x.rows_mut(0, n).fill(opts.normalization / n as f64);
        }
        let res = inf_norm(&Scaled { mats, s: 1.0 }.residual(&x, opts.normalization).value);
        return Ok(assemble(mats, &x, res, 0, false));
    }

    let full = Scaled { mats, s: 1.0 };
    let direct = newton(&full, DVector::zeros(n + 1), opts, tol);
    let mut failure = match direct {
        Ok((x, res, iters)) => {
            let policy = assemble(mats, &x, res, iters, false);
            let bad = rate_violations(mats, &policy.eff_rates, opts.rate_tol);
            if bad.is_empty() {
                return Ok(policy);
            }
            Err(violation_error(&bad))
        }
        Err((iterations, residual)) => Err(Error::NoSolution { iterations, residual }),
    };

    if opts.continuation {
        match continuation(mats, opts, tol) {
            Ok(policy) => return Ok(policy),
            Err(e) => {
                // Prefer the more informative message from the direct attempt
                // unless continuation got further.
                if matches!(failure, Err(Error::NoSolution { .. })) {
                    failure = Err(e);
                }
            }
        }
    }
    failure
}

fn violation_error(bad: &[(usize, usize, f64)]) -> Error {
    let list: Vec<String> = bad
        .iter()
        .map(|(i, j, r)| format!("counter {i} in state {j}: {r:.6e}"))
        .collect();
    Error::GeneratorViolation(format!("negative effective rates ({})", list.join("; ")))
}

fn continuation(mats: &ChainMatrices, opts: &StationaryOptions, tol: f64) -> Result<StationaryPolicy> {
    let n = mats.states();
    let mut x = DVector::zeros(n + 1);
    if opts.normalization != 0.0 {
        x.rows_mut(0, n).fill(opts.normalization / n as f64);
    }
    let mut s: f64 = 0.0;
    let mut ds = 0.05;
    let mut total_iters = 0;
    let mut last_residual = f64::INFINITY;
    while s < 1.0 {
        if ds < 1e-8 {
            return Err(Error::NoSolution {
                iterations: total_iters,
                residual: last_residual,
            });
        }
        let next = (s + ds).min(1.0);
        let problem = Scaled { mats, s: next };
        match newton(&problem, x.clone(), opts, tol) {
            Ok((y, res, iters)) => {
                total_iters += iters;
                s = next;
                x = y;
                last_residual = res;
                if iters <= 4 {
                    ds *= 2.0;
                }
            }
            Err((iters, res)) => {
                total_iters += iters;
                last_residual = res;
                ds *= 0.5;
            }
        }
    }
    let policy = assemble(mats, &x, last_residual, total_iters, true);
    let bad = rate_violations(mats, &policy.eff_rates, opts.rate_tol);
    if bad.is_empty() {
        Ok(policy)
    } else {
        Err(violation_error(&bad))
    }
}

/// Control input `u = K x` for a canonical unit vector `x`.
pub fn control_input(policy: &StationaryPolicy, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = policy.states();
    if x.len() != n {
        return Err(Error::InvalidState(format!("state has length {}, expected {n}", x.len())));
    }
    let ones = x.iter().filter(|&&v| v == 1.0).count();
    let zeros = x.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || zeros != n - 1 {
        return Err(Error::InvalidState("state is not a canonical unit vector".into()));
    }
    Ok(&policy.gains * x)
}
