//! Classical baselines on i.i.d. draws.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_delta, coordinate_median, EstimatorError};
use crate::oracles::CostLedger;
use crate::probspace::RandomVariable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub draws: Vec<Vec<f64>>,
    /// Seed of the stream that produced the batch, when known.
    pub seed: Option<u64>,
    pub count: usize,
}

/// `count` i.i.d. draws; charges `count` classical samples.
pub fn sample<R: Rng + ?Sized>(rv: &RandomVariable, count: usize, rng: &mut R, ledger: &mut CostLedger) -> SampleBatch {
    let dist = WeightedIndex::new(rv.probs()).expect("validated probabilities");
    let draws: Vec<Vec<f64>> = (0..count).map(|_| rv.value(dist.sample(rng)).to_vec()).collect();
    ledger.classical_samples += count as u64;
    SampleBatch { count: draws.len(), draws, seed: None }
}

fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let k = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

pub fn empirical_mean(batch: &SampleBatch) -> Result<Vec<f64>, EstimatorError> {
    if batch.draws.is_empty() {
        return Err(EstimatorError::Empty);
    }
    Ok(mean_of(&batch.draws))
}

/// Contiguous blocks (the remainder joins the last one), then the
/// coordinate-wise median of the block means.
pub fn median_of_means(batch: &SampleBatch, groups: usize) -> Result<Vec<f64>, EstimatorError> {
    let count = batch.draws.len();
    if groups == 0 || groups > count {
        return Err(EstimatorError::Precondition(format!("groups = {groups} must lie in [1, {count}]")));
    }
    let size = count / groups;
    let means: Vec<Vec<f64>> = (0..groups)
        .map(|g| {
            let end = if g + 1 == groups { count } else { (g + 1) * size };
            mean_of(&batch.draws[g * size..end])
        })
        .collect();
    coordinate_median(&means)
}

/// `⌈8·log₂(1/δ)⌉` groups, kept within `[1, n]`.
pub fn mom_groups(n: usize, delta: f64) -> usize {
    ((8.0 * (1.0 / delta).log2()).ceil() as usize).clamp(1, n.max(1))
}

/// Median-of-means on exactly `n` fresh draws.
pub fn subgaussian_estimate<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: usize,
    delta: f64,
    rng: &mut R,
    ledger: &mut CostLedger,
) -> Result<(Vec<f64>, SampleBatch), EstimatorError> {
    check_delta(delta)?;
    let min = (1.0 / delta).log2().ceil().max(1.0) as usize;
    if n < min {
        return Err(EstimatorError::Precondition(format!("n = {n} is below ⌈log₂(1/δ)⌉ = {min}")));
    }
    let batch = sample(rv, n, rng, ledger);
    let est = median_of_means(&batch, mom_groups(n, delta))?;
    Ok((est, batch))
}
