//! One-replicate plant simulations that return squared errors on a grid.
//!
//! All of them walk the merged sequence of grid times and sampling instants,
//! advance the plant with its exact transition, and treat a sample that
//! coincides with a grid time as happening first.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::estimators::{kalman_predict, kalman_step, KalmanState};
use crate::plant_models::{
    discretize_linear, exact_scalar_step, exact_vector_step, measure, DiscretizedStep, LinearPlant, ScalarPlant,
};

/// Next item in the merged walk.
enum Tick {
    Sample(f64),
    Grid(usize),
}

/// Merges sorted `events` into `grid`, events first on ties.
fn merged<'a>(events: &'a [f64], grid: &'a [f64]) -> impl Iterator<Item = Tick> + 'a {
    let (mut gi, mut ei) = (0, 0);
    std::iter::from_fn(move || {
        if gi >= grid.len() {
            return None;
        }
        if ei < events.len() && events[ei] <= grid[gi] {
            ei += 1;
            Some(Tick::Sample(events[ei - 1]))
        } else {
            gi += 1;
            Some(Tick::Grid(gi - 1))
        }
    })
}

fn normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Squared error of the hold-and-decay predictor `ŷ = e^{-γ(t - T_i)}y_i`.
/// Plant and estimate both start at zero.
pub fn scalar_predictor_errors<R: Rng + ?Sized>(
    plant: &ScalarPlant,
    events: &[f64],
    grid: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let (mut z, mut est, mut t) = (0.0, 0.0, 0.0);
    for tick in merged(events, grid) {
        let next = match tick {
            Tick::Sample(s) => s,
            Tick::Grid(k) => grid[k],
        };
        let dt = next - t;
        if dt > 0.0 {
            z = exact_scalar_step(z, dt, plant, rng.sample(StandardNormal));
            est *= (-plant.gamma * dt).exp();
            t = next;
        }
        match tick {
            Tick::Sample(_) => est = z + plant.eta * rng.sample::<f64, _>(StandardNormal),
            Tick::Grid(_) => out.push((z - est).powi(2)),
        }
    }
    out
}

/// Exact steps for a fixed grid spacing plus fresh ones for other gaps.
struct StepCache<'a> {
    plant: &'a LinearPlant,
    grid_step: DiscretizedStep,
}

impl<'a> StepCache<'a> {
    fn new(plant: &'a LinearPlant, grid_dt: f64) -> Result<Self> {
        Ok(Self {
            plant,
            grid_step: discretize_linear(plant, grid_dt)?,
        })
    }

    fn get(&self, dt: f64) -> Result<std::borrow::Cow<'_, DiscretizedStep>> {
        if (dt - self.grid_step.dt).abs() <= 1e-12 * self.grid_step.dt {
            Ok(std::borrow::Cow::Borrowed(&self.grid_step))
        } else {
            Ok(std::borrow::Cow::Owned(discretize_linear(self.plant, dt)?))
        }
    }
}

fn grid_spacing(grid: &[f64]) -> f64 {
    if grid.len() > 1 {
        grid[1] - grid[0]
    } else {
        1.0
    }
}

/// `‖z - ẑ‖²` for the matrix predictor `ẑ = e^{A(t - T_i)}y_i` with
/// full-state samples `y = z + n`.
pub fn vector_predictor_errors<R: Rng + ?Sized>(
    plant: &LinearPlant,
    events: &[f64],
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = plant.dim();
    let p = plant.c().nrows();
    let cache = StepCache::new(plant, grid_spacing(grid))?;
    let mut out = Vec::with_capacity(grid.len());
    let mut z = DVector::zeros(d);
    let mut est = DVector::zeros(d);
    let mut t = 0.0;
    for tick in merged(events, grid) {
        let next = match tick {
            Tick::Sample(s) => s,
            Tick::Grid(k) => grid[k],
        };
        let dt = next - t;
        if dt > 0.0 {
            let step = cache.get(dt)?;
            z = exact_vector_step(&z, &step, &normals(rng, d));
            est = &step.f * est;
            t = next;
        }
        match tick {
            Tick::Sample(_) => est = measure(&z, plant, &normals(rng, p))?,
            Tick::Grid(_) => out.push((&z - &est).norm_squared()),
        }
    }
    Ok(out)
}

/// `‖z - x̂‖²` for the sampled Kalman filter with output samples. The filter
/// starts from the open-loop stationary prior.
pub fn kalman_errors<R: Rng + ?Sized>(
    plant: &LinearPlant,
    events: &[f64],
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = plant.dim();
    let p = plant.c().nrows();
    let cache = StepCache::new(plant, grid_spacing(grid))?;
    let no_time = discretize_linear(plant, 0.0)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut z = DVector::zeros(d);
    let mut filt = KalmanState::stationary_prior(plant)?;
    for tick in merged(events, grid) {
        let next = match tick {
            Tick::Sample(s) => s,
            Tick::Grid(k) => grid[k],
        };
        let dt = next - filt.t;
        if dt > 0.0 {
            let step = cache.get(dt)?;
            z = exact_vector_step(&z, &step, &normals(rng, d));
            filt = kalman_predict(&filt, &step);
            filt.t = next;
        }
        match tick {
            Tick::Sample(_) => {
                let y = measure(&z, plant, &normals(rng, p))?;
                filt = kalman_step(&filt, &no_time, plant.c(), plant.r(), &y)?;
            }
            Tick::Grid(_) => out.push((&z - &filt.x_hat).norm_squared()),
        }
    }
    Ok(out)
}

/// Posterior `trace(P)` after every sample of a fixed schedule, together with
/// the prior trace before the first one. The covariance recursion does not
/// depend on the data.
pub fn kalman_covariance_traces(plant: &LinearPlant, events: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut filt = KalmanState::stationary_prior(plant)?;
    let prior = filt.p.trace();
    let zero_y = DVector::zeros(plant.c().nrows());
    let mut traces = Vec::with_capacity(events.len());
    for &te in events {
        let step = discretize_linear(plant, te - filt.t)?;
        filt = kalman_step(&filt, &step, plant.c(), plant.r(), &zero_y)?;
        traces.push(filt.p.trace());
    }
    Ok((prior, traces))
}
