//! Replicate-parallel Monte Carlo with order-independent aggregation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::rng::{replicate_rng, SimRng};

/// Two-sided 99% normal quantile used for confidence half-widths.
pub const Z_99: f64 = 2.5758293035489;

/// Pointwise statistics over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseStats {
    pub replicates: usize,
    pub mean: Vec<f64>,
    /// Unbiased sample variance; zero when there is a single replicate.
    pub variance: Vec<f64>,
}

impl PointwiseStats {
    /// Standard error of the mean at index `k`.
    pub fn se(&self, k: usize) -> f64 {
        (self.variance[k] / self.replicates as f64).sqrt()
    }

    /// `z₀.₉₉ · s / √N`.
    pub fn ci_half(&self, k: usize) -> f64 {
        Z_99 * self.se(k)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Runs `runner(index, rng)` for `n` replicates in parallel. Every replicate
/// gets its own stream of `master_seed`, and the outputs must all have the
/// same length. Aggregation walks replicates in index order with compensated
/// sums, so the result does not depend on thread scheduling.
pub fn monte_carlo<F>(n: usize, master_seed: u64, runner: F) -> Result<PointwiseStats>
where
    F: Fn(usize, &mut SimRng) -> Result<Vec<f64>> + Sync,
{
    let outputs = run_replicates(n, master_seed, runner)?;
    aggregate(&outputs)
}

/// Raw per-replicate outputs in index order.
pub fn run_replicates<F, T>(n: usize, master_seed: u64, runner: F) -> Result<Vec<T>>
where
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync,
    T: Send,
{
    if n == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let results: Vec<Result<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(master_seed, i as u64);
            runner(i, &mut rng)
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Pointwise mean and unbiased variance of equally long vectors.
pub fn aggregate(outputs: &[Vec<f64>]) -> Result<PointwiseStats> {
    let n = outputs.len();
    let len = outputs.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::InsufficientData("no replicates to aggregate".into()));
    }
    if let Some(i) = outputs.iter().position(|o| o.len() != len) {
        return Err(Error::Replicate {
            index: i,
            source: Box::new(Error::Numerical(format!(
                "output length {} differs from {len}",
                outputs[i].len()
            ))),
        });
    }
    let mut mean = vec![0.0; len];
    let mut variance = vec![0.0; len];
    for k in 0..len {
        let mut s = CompensatedSum::default();
        for o in outputs {
            s.add(o[k]);
        }
        let m = s.value() / n as f64;
        mean[k] = m;
        if n > 1 {
            let mut sq = CompensatedSum::default();
            for o in outputs {
                sq.add((o[k] - m).powi(2));
            }
            variance[k] = sq.value() / (n - 1) as f64;
        }
    }
    Ok(PointwiseStats {
        replicates: n,
        mean,
        variance,
    })
}
