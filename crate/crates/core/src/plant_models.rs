//! Linear stochastic plants and their exact transitions between sampling
//! instants.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{expm, max_sym_eigenvalue, psd_sqrt, symmetrize};

/// Scalar Ornstein–Uhlenbeck plant `dz = -γ z dt + σ dw` measured with
/// additive noise of standard deviation `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPlant {
    pub gamma: f64,
    pub sigma: f64,
    pub eta: f64,
}

impl ScalarPlant {
    pub fn new(gamma: f64, sigma: f64, eta: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("decay rate must be positive, got {gamma}")));
        }
        if !(sigma >= 0.0) || !(eta >= 0.0) {
            return Err(invalid("diffusion and measurement noise must be nonnegative"));
        }
        Ok(Self { gamma, sigma, eta })
    }

    /// Open-loop stationary variance `σ²/(2γ)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.gamma)
    }

    /// Variance accumulated over `dt` starting from a known state.
    pub fn transition_variance(&self, dt: f64) -> f64 {
        self.stationary_variance() * -(-2.0 * self.gamma * dt).exp_m1()
    }
}

/// Higher-order plant `dz = A z dt + H dw`, `y = C z + n`, `n ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    r: DMatrix<f64>,
    r_factor: DMatrix<f64>,
    lambda_bar: f64,
}

impl LinearPlant {
    /// Any drift is accepted here; the bounds themselves check `λ̄ < 0`.
    pub fn new(a: DMatrix<f64>, h: DMatrix<f64>, c: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || !a.is_square() {
            return Err(invalid("drift matrix must be square and nonempty"));
        }
        if h.nrows() != d {
            return Err(invalid(format!("diffusion matrix has {} rows, expected {d}", h.nrows())));
        }
        if c.ncols() != d {
            return Err(invalid(format!("output matrix has {} columns, expected {d}", c.ncols())));
        }
        let p = c.nrows();
        if r.shape() != (p, p) {
            return Err(invalid(format!("measurement covariance must be {p}x{p}")));
        }
        if (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
            return Err(invalid("measurement covariance is not symmetric"));
        }
        let r_factor = psd_sqrt(&r).map_err(|e| invalid(format!("measurement covariance: {e}")))?;
        let lambda_bar = max_sym_eigenvalue(&(&a + a.transpose()));
        Ok(Self {
            a,
            h,
            c,
            r,
            r_factor,
            lambda_bar,
        })
    }

    /// Plant measured through `C = I`.
    pub fn with_state_measurement(a: DMatrix<f64>, h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        Self::new(a, h, DMatrix::identity(d, d), r)
    }

    pub fn from_scalar(p: &ScalarPlant) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, -p.gamma),
            DMatrix::from_element(1, 1, p.sigma),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, p.eta * p.eta),
        )
        .expect("a valid scalar plant is a valid linear plant")
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Largest eigenvalue of `A + Aᵀ`.
    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    /// `trace(HᵀH)`.
    pub fn diffusion_trace(&self) -> f64 {
        self.h.norm_squared()
    }
}

/// Linearized outflow rate `(a/a′)·sqrt(g/(2h))` of a gravity-drained tank.
pub fn water_tank_gamma(a_outlet: f64, a_section: f64, level: f64, gravity: f64) -> Result<f64> {
    for (name, v) in [
        ("outlet area", a_outlet),
        ("tank cross-section", a_section),
        ("water level", level),
        ("gravity", gravity),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(a_outlet / a_section * (gravity / (2.0 * level)).sqrt())
}

/// Drift of two tanks in series where the top tank drains into the bottom one.
pub fn two_tank_drift(gamma_top: f64, gamma_bottom: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-gamma_top, 0.0, gamma_top, -gamma_bottom])
}

/// Exact OU transition over `dt` given a standard normal draw.
pub fn exact_scalar_step(z: f64, dt: f64, plant: &ScalarPlant, noise: f64) -> f64 {
    (-plant.gamma * dt).exp() * z + plant.transition_variance(dt).sqrt() * noise
}

/// Exact discretization `z[k+1] = F z[k] + w`, `w ~ N(0, Q)`, over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedStep {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub dt: f64,
    noise_factor: DMatrix<f64>,
}

impl DiscretizedStep {
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>, dt: f64) -> Result<Self> {
        let q = symmetrize(&q);
        let noise_factor = psd_sqrt(&q)?;
        Ok(Self { f, q, dt, noise_factor })
    }

    /// `L` with `L Lᵀ = Q`.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }
}

/// `F = e^{AΔ}` and `Q = ∫₀^Δ e^{Aτ}HHᵀe^{Aᵀτ}dτ` from one block exponential.
pub fn discretize_linear(plant: &LinearPlant, dt: f64) -> Result<DiscretizedStep> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(invalid(format!("step must be nonnegative, got {dt}")));
    }
    let d = plant.dim();
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(plant.a());
    block.view_mut((0, d), (d, d)).copy_from(&(plant.h() * plant.h().transpose()));
    block.view_mut((d, d), (d, d)).copy_from(&(-plant.a().transpose()));
    let e = expm(&(block * dt));
    let f = e.view((0, 0), (d, d)).into_owned();
    let q = e.view((0, d), (d, d)) * f.transpose();
    DiscretizedStep::new(f, q, dt)
}

/// `z′ = F z + L·noise` with `L Lᵀ = Q`.
pub fn exact_vector_step(z: &DVector<f64>, step: &DiscretizedStep, noise: &DVector<f64>) -> DVector<f64> {
    &step.f * z + &step.noise_factor * noise
}

/// `y = C z + sqrt(R)·noise` for the plant's own output map.
pub fn measure(z: &DVector<f64>, plant: &LinearPlant, noise: &DVector<f64>) -> Result<DVector<f64>> {
    if z.len() != plant.dim() || noise.len() != plant.c().nrows() {
        return Err(invalid("state or noise dimension does not match the output map"));
    }
    Ok(plant.c() * z + &plant.r_factor * noise)
}

/// `y = C z + sqrt(R)·noise` for an arbitrary output map.
pub fn measure_with(z: &DVector<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>, noise: &DVector<f64>) -> Result<DVector<f64>> {
    if c.ncols() != z.len() || r.shape() != (c.nrows(), c.nrows()) || noise.len() != c.nrows() {
        return Err(invalid("dimension mismatch in measurement"));
    }
    Ok(c * z + psd_sqrt(r)? * noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn tank_plant(gamma: f64) -> LinearPlant {
        LinearPlant::with_state_measurement(
            two_tank_drift(gamma, gamma),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.09,
        )
        .unwrap()
    }

    fn normals(rng: &mut impl Rng, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
    }

    #[test]
    fn water_tank_rates() {
        assert_abs_diff_eq!(water_tank_gamma(0.20, 1.00, 0.40, 9.80).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(water_tank_gamma(0.10, 1.00, 0.54, 9.80).unwrap(), 0.30, epsilon = 0.005);
        assert!(water_tank_gamma(0.0, 1.0, 0.4, 9.8).is_err());
    }

    #[test]
    fn scalar_step_basics() {
        let p = ScalarPlant::new(0.7, 1.0, 0.3).unwrap();
        assert_eq!(exact_scalar_step(1.3, 0.0, &p, 2.0), 1.3);
        assert_abs_diff_eq!(exact_scalar_step(1.0, 1.0, &p, 0.0), 0.4966, epsilon = 1e-4);
    }

    #[test]
    fn scalar_step_variance() {
        let p = ScalarPlant::new(0.3, 1.0, 0.0).unwrap();
        let mut rng = seeded_rng(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| exact_scalar_step(0.0, 0.5, &p, rng.sample(StandardNormal)))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = (1.0 - (-0.3f64).exp()) / 0.6;
        assert!((var - exact).abs() <= 3.0 * exact * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn discretize_identity_case() {
        let plant = LinearPlant::with_state_measurement(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let step = discretize_linear(&plant, 1.0).unwrap();
        assert_abs_diff_eq!(step.f, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_abs_diff_eq!(step.q, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn discretize_scalar_matches_ou() {
        let sp = ScalarPlant::new(0.7, 1.3, 0.0).unwrap();
        let step = discretize_linear(&LinearPlant::from_scalar(&sp), 0.8).unwrap();
        assert_abs_diff_eq!(step.f[(0, 0)], (-0.7f64 * 0.8).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(step.q[(0, 0)], sp.transition_variance(0.8), epsilon = 1e-14);
    }

    /// Adaptive Simpson on each entry of the noise integrand, using the closed
    /// form `e^{Aτ} = e^{-γτ}[[1, 0], [γτ, 1]]` for equal tanks.
    fn quadrature_q(gamma: f64, dt: f64) -> DMatrix<f64> {
        fn integrand(gamma: f64, t: f64, i: usize, j: usize) -> f64 {
            let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, gamma * t, 1.0]) * (-gamma * t).exp();
            (&e * e.transpose())[(i, j)]
        }
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let mut q = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let f = |t: f64| integrand(gamma, t, i, j);
                let (fa, fm, fb) = (f(0.0), f(dt / 2.0), f(dt));
                let whole = dt / 6.0 * (fa + 4.0 * fm + fb);
                q[(i, j)] = simpson(&f, 0.0, dt, fa, fm, fb, whole, 1e-13, 40);
            }
        }
        q
    }

    #[test]
    fn discretize_two_tank_matches_quadrature() {
        let plant = tank_plant(0.7);
        let step = discretize_linear(&plant, 0.7).unwrap();
        assert_abs_diff_eq!(step.q, quadrature_q(0.7, 0.7), epsilon = 1e-8);
    }

    #[test]
    fn vector_step_trivia() {
        let plant = tank_plant(0.7);
        let step = discretize_linear(&plant, 0.4).unwrap();
        let z = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(exact_vector_step(&z, &step, &DVector::zeros(2)), &step.f * &z);
        let zero = discretize_linear(&plant, 0.0).unwrap();
        assert_abs_diff_eq!(
            exact_vector_step(&z, &zero, &DVector::from_vec(vec![3.0, 4.0])),
            z,
            epsilon = 1e-14
        );
    }

    #[test]
    fn vector_step_covariance() {
        let plant = tank_plant(0.3);
        let step = discretize_linear(&plant, 0.9).unwrap();
        let mut rng = seeded_rng(2);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let z = exact_vector_step(&DVector::zeros(2), &step, &normals(&mut rng, 2));
            acc += &z * z.transpose();
        }
        acc /= n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let q = &step.q;
                let se = ((q[(i, i)] * q[(j, j)] + q[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((acc[(i, j)] - q[(i, j)]).abs() <= 3.0 * se, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn measurement_models() {
        let z = DVector::from_vec(vec![1.5, -0.25]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let y = measure_with(&z, &c, &DMatrix::zeros(1, 1), &DVector::from_element(1, 3.0)).unwrap();
        assert_eq!(y[0], -0.25);
        assert!(measure_with(&z, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), &DVector::zeros(3)).is_err());

        let plant = tank_plant(0.7);
        let mut rng = seeded_rng(3);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let y = measure(&DVector::zeros(2), &plant, &normals(&mut rng, 2)).unwrap();
            acc += &y * y.transpose();
        }
        acc /= n as f64;
        let r = plant.r();
        for i in 0..2 {
            for j in 0..2 {
                let se = ((r[(i, i)] * r[(j, j)] + r[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((acc[(i, j)] - r[(i, j)]).abs() <= 3.0 * se);
            }
        }
    }

    #[test]
    fn rejects_bad_plants() {
        assert!(ScalarPlant::new(0.0, 1.0, 0.1).is_err());
        assert!(LinearPlant::with_state_measurement(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn scalar_steps_compose(
            gamma in 0.05f64..3.0,
            sigma in 0.0f64..2.0,
            z in -5.0f64..5.0,
            dt1 in 0.0f64..3.0,
            dt2 in 0.0f64..3.0,
        ) {
            let p = ScalarPlant::new(gamma, sigma, 0.0).unwrap();
            let mean_two = exact_scalar_step(exact_scalar_step(z, dt1, &p, 0.0), dt2, &p, 0.0);
            let mean_one = exact_scalar_step(z, dt1 + dt2, &p, 0.0);
            prop_assert!((mean_two - mean_one).abs() <= 1e-12 * z.abs().max(1.0));
            let var_two = (-2.0 * gamma * dt2).exp() * p.transition_variance(dt1) + p.transition_variance(dt2);
            prop_assert!((var_two - p.transition_variance(dt1 + dt2)).abs() <= 1e-12);
        }

        #[test]
        fn discretization_semigroup(
            entries in prop::collection::vec(-1.0f64..1.0, 4),
            h in prop::collection::vec(-1.0f64..1.0, 4),
            dt1 in 0.0f64..2.0,
            dt2 in 0.0f64..2.0,
        ) {
            let a = DMatrix::from_row_slice(2, 2, &entries) - DMatrix::identity(2, 2) * 1.5;
            let plant = LinearPlant::with_state_measurement(a, DMatrix::from_row_slice(2, 2, &h), DMatrix::zeros(2, 2)).unwrap();
            let s1 = discretize_linear(&plant, dt1).unwrap();
            let s2 = discretize_linear(&plant, dt2).unwrap();
            let s12 = discretize_linear(&plant, dt1 + dt2).unwrap();
            prop_assert!((&s12.f - &s2.f * &s1.f).amax() <= 1e-10);
            let composed = &s2.f * &s1.q * s2.f.transpose() + &s2.q;
            prop_assert!((&s12.q - composed).amax() <= 1e-10);
        }

        #[test]
        fn lambda_bar_matches_closed_form(entries in prop::collection::vec(-3.0f64..3.0, 4)) {
            let a = DMatrix::from_row_slice(2, 2, &entries);
            let plant = LinearPlant::with_state_measurement(a.clone(), DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
            let (p, q, r) = (2.0 * a[(0, 0)], a[(0, 1)] + a[(1, 0)], 2.0 * a[(1, 1)]);
            let oracle = 0.5 * (p + r) + (0.25 * (p - r).powi(2) + q * q).sqrt();
            prop_assert!((plant.lambda_bar() - oracle).abs() <= 1e-10);
        }
    }
}
