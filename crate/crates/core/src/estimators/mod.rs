//! Mean estimators: the quantum algorithms run against simulated oracles, and
//! the classical baselines they are compared with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridqft::{lattice_cap_from_env, GridError};
use crate::oracles::{CostLedger, CostModel, NoiseModel, OracleError, QuantileMode};
use crate::probspace::{norm2, norm_inf, ProbError, RandomVariable};

pub mod classical;
pub mod quantum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("parameter `{name}` = {value} outside {range}")]
    Parameter { name: &'static str, value: f64, range: &'static str },
    #[error("{0}")]
    Precondition(String),
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

pub(crate) fn check_delta(delta: f64) -> Result<(), EstimatorError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(EstimatorError::Parameter { name: "delta", value: delta, range: "(0, 1)" })
    }
}

/// `log₂(d/δ)`, the confidence factor shared by every estimator.
pub fn log_factor(d: usize, delta: f64) -> f64 {
    (d as f64 / delta).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Bounded,
    NearOptimal,
    Euclidean,
    Qphase,
    Qlowprec,
    PhaseDispatch,
    Classical,
    Trivial,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Bounded => "bounded",
            EstimatorId::NearOptimal => "near_optimal",
            EstimatorId::Euclidean => "euclidean",
            EstimatorId::Qphase => "qphase",
            EstimatorId::Qlowprec => "qlowprec",
            EstimatorId::PhaseDispatch => "phase_dispatch",
            EstimatorId::Classical => "classical",
            EstimatorId::Trivial => "trivial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            EstimatorId::Bounded,
            EstimatorId::NearOptimal,
            EstimatorId::Euclidean,
            EstimatorId::Qphase,
            EstimatorId::Qlowprec,
            EstimatorId::PhaseDispatch,
            EstimatorId::Classical,
            EstimatorId::Trivial,
        ]
        .into_iter()
        .find(|e| e.as_str() == s)
    }
}

/// Knobs shared by every estimator run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub noise: NoiseModel,
    pub cost: CostModel,
    /// Quantile-oracle constant `c`.
    pub quantile_c: f64,
    pub quantile_mode: QuantileMode,
    /// Largest number of grid points a full state may hold.
    pub lattice_cap: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            noise: NoiseModel::ideal(),
            cost: CostModel::default(),
            quantile_c: 0.25,
            quantile_mode: QuantileMode::Simulated,
            lattice_cap: lattice_cap_from_env(),
        }
    }
}

/// Parameters echoed into every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub n: f64,
    pub n_prime: Option<f64>,
    pub delta: f64,
    pub l2: Option<f64>,
    pub noise: NoiseModel,
    pub quantile_c: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    pub err_inf: f64,
    pub err_l2: f64,
    pub ledger: CostLedger,
    pub estimator_id: EstimatorId,
    /// Which code path produced the estimate, e.g. `early_exit` or `classical`.
    pub branch: String,
    pub params: RunParams,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(
        estimator_id: EstimatorId,
        branch: impl Into<String>,
        estimate: Vec<f64>,
        rv: &RandomVariable,
        ledger: CostLedger,
        params: RunParams,
    ) -> Self {
        let truth = rv.mean();
        let diff: Vec<f64> = estimate.iter().zip(&truth).map(|(a, b)| a - b).collect();
        Self {
            err_inf: norm_inf(&diff),
            err_l2: norm2(&diff),
            estimate,
            truth,
            ledger,
            estimator_id,
            branch: branch.into(),
            params,
            notes: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.params.seed = Some(seed);
        self
    }
}

/// Per coordinate, the `⌈r/2⌉`-th smallest of `r` values.
pub fn coordinate_median(estimates: &[Vec<f64>]) -> Result<Vec<f64>, EstimatorError> {
    let first = estimates.first().ok_or(EstimatorError::Empty)?;
    let d = first.len();
    if estimates.iter().any(|e| e.len() != d) {
        return Err(EstimatorError::Precondition("estimates have differing dimensions".into()));
    }
    let r = estimates.len();
    let rank = r.div_ceil(2) - 1;
    let mut col = vec![0.0; r];
    Ok((0..d)
        .map(|j| {
            for (c, e) in col.iter_mut().zip(estimates) {
                *c = e[j];
            }
            col.sort_by(f64::total_cmp);
            col[rank]
        })
        .collect())
}
