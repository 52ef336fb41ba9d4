//! Experiment orchestration: seeded trial batteries, sweeps, slope fits,
//! regime classification and file output.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::classical::subgaussian_estimate;
use crate::estimators::quantum::{bounded, euclidean, near_optimal, phase_model_dispatch, qlowprec, qphase};
use crate::estimators::{log_factor, EstimateReport, EstimatorError, EstimatorId, RunParams, Settings};
use crate::hardness::{
    balanced_bits, fractional_phase_rv, hard_rv_high_precision, hard_rv_low_precision, search_parity_instance,
    HardInstance, HardnessError, HighPrecisionNorm,
};
use crate::oracles::{CostLedger, CostModel, NoiseModel, QuantileMode};
use crate::probspace::{parse_distribution_spec, ProbError, RandomVariable};
use crate::SimRng;

pub mod battery;
pub mod checks;
pub mod export;

pub use battery::{battery, phase_battery, BatteryKind};
pub use export::{emit_plot_data, read_rows_json, rows_to_csv, write_csv, write_json, PlotKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Hardness(#[from] HardnessError),
    #[error("fit needs at least 4 rows with positive values: {0}")]
    Fit(String),
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Parameters of a generated hard instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardSpec {
    /// `low`, `high` or `fracphase`.
    pub family: String,
    pub n: usize,
    pub d: usize,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "four")]
    pub alpha: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub norm: HighPrecisionNorm,
}

fn one() -> f64 {
    1.0
}

fn four() -> usize {
    4
}

/// Builds the instance described by `spec`, with seeded bits.
pub fn generate_hard(spec: &HardSpec) -> Result<HardInstance, HarnessError> {
    let mut rng = SimRng::seed_from_u64(spec.seed);
    let inst = match spec.family.as_str() {
        "low" => {
            let len = spec.alpha * spec.n;
            let b = balanced_bits(len, len / 2, &mut rng);
            hard_rv_low_precision(spec.n, spec.d, spec.sigma, &b, spec.alpha)?
        }
        "high" => {
            let parity = search_parity_instance(spec.d, spec.alpha * spec.n / spec.d.max(1), &mut rng)?;
            hard_rv_high_precision(spec.n, spec.d, spec.sigma, &parity, spec.alpha, spec.norm)?
        }
        "fracphase" => {
            let b: Vec<u8> = (0..spec.d).map(|_| rand::Rng::gen_range(&mut rng, 0..2)).collect();
            fractional_phase_rv(spec.d, spec.n, &b)?
        }
        other => return Err(HarnessError::Config(format!("unknown hard family `{other}`"))),
    };
    Ok(inst)
}

/// Where an experiment's distribution comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RvSource {
    /// A distribution document embedded in the config.
    Inline(serde_json::Value),
    File(PathBuf),
    Hard(HardSpec),
    Battery { kind: BatteryKind, d: usize, seed: u64 },
    PhaseBattery { d: usize, k: usize, seed: u64 },
}

impl RvSource {
    pub fn load(&self) -> Result<RandomVariable, HarnessError> {
        match self {
            RvSource::Inline(v) => Ok(parse_distribution_spec(&v.to_string())?),
            RvSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                Ok(parse_distribution_spec(&text)?)
            }
            RvSource::Hard(spec) => generate_hard(spec)?
                .rv
                .ok_or_else(|| HarnessError::Config("generator returned no distribution".into())),
            RvSource::Battery { kind, d, seed } => Ok(battery(*kind, *d, *seed)?),
            RvSource::PhaseBattery { d, k, seed } => Ok(phase_battery(*d, *k, *seed)?),
        }
    }
}

/// Budget grid of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Values of `n`, with `n′` fixed from the config.
    N(Vec<f64>),
    /// `(n, n′)` pairs.
    Pairs(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: RvSource,
    pub estimator: EstimatorId,
    pub n: f64,
    #[serde(default)]
    pub n_prime: Option<f64>,
    pub delta: f64,
    /// Bound on `E‖X‖₂` for the bounded estimator; the exact value when absent.
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default)]
    pub noise: NoiseModel,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "one")]
    pub cost_constant: f64,
    #[serde(default = "quarter")]
    pub quantile_c: f64,
    #[serde(default)]
    pub quantile_mode: QuantileMode,
    /// Constant in the classical failure bound.
    #[serde(default = "one")]
    pub classical_k: f64,
}

fn quarter() -> f64 {
    0.25
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        match &self.sweep {
            Some(Sweep::N(ns)) if !strictly_increasing(ns) || ns.is_empty() => {
                Err(HarnessError::Config("sweep n grid must be nonempty and strictly increasing".into()))
            }
            Some(Sweep::Pairs(ps)) if !strictly_increasing(ps) || ps.is_empty() => {
                Err(HarnessError::Config("sweep pairs must be nonempty and strictly increasing".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn settings(&self) -> Settings {
        Settings {
            noise: self.noise,
            cost: CostModel { constant: self.cost_constant },
            quantile_c: self.quantile_c,
            quantile_mode: self.quantile_mode,
            ..Settings::default()
        }
    }

    /// The `(n, n′)` points this config covers.
    pub fn points(&self) -> Vec<(f64, Option<f64>)> {
        match &self.sweep {
            None => vec![(self.n, self.n_prime)],
            Some(Sweep::N(ns)) => ns.iter().map(|&n| (n, self.n_prime)).collect(),
            Some(Sweep::Pairs(ps)) => ps.iter().map(|&(n, np)| (n, Some(np))).collect(),
        }
    }

    pub fn trial_spec(&self, n: f64, n_prime: Option<f64>) -> TrialSpec {
        TrialSpec {
            estimator: self.estimator,
            n,
            n_prime,
            delta: self.delta,
            l2: self.l2,
            settings: self.settings(),
            classical_k: self.classical_k,
        }
    }
}

/// One budget point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub estimator: EstimatorId,
    pub n: f64,
    pub n_prime: Option<f64>,
    pub delta: f64,
    pub l2: Option<f64>,
    pub settings: Settings,
    pub classical_k: f64,
}

impl TrialSpec {
    pub fn new(estimator: EstimatorId, n: f64, n_prime: Option<f64>, delta: f64) -> Self {
        Self { estimator, n, n_prime, delta, l2: None, settings: Settings::default(), classical_k: 1.0 }
    }

    fn need_n_prime(&self) -> Result<f64, EstimatorError> {
        self.n_prime
            .ok_or_else(|| EstimatorError::Precondition(format!("{} needs n′", self.estimator.as_str())))
    }
}

/// Runs the estimator named by `spec` once.
pub fn run_estimator(spec: &TrialSpec, rv: &RandomVariable, rng: &mut SimRng) -> Result<EstimateReport, EstimatorError> {
    let s = &spec.settings;
    let (n, delta) = (spec.n, spec.delta);
    match spec.estimator {
        EstimatorId::Bounded => bounded(rv, spec.l2.unwrap_or_else(|| rv.exp_norm2()), n, delta, s, rng),
        EstimatorId::NearOptimal => near_optimal(rv, n, delta, s, rng),
        EstimatorId::Euclidean => euclidean(rv, n, delta, s, rng),
        EstimatorId::Qphase => qphase(rv, n, spec.need_n_prime()?, delta, s, rng),
        EstimatorId::Qlowprec => qlowprec(rv, n, spec.need_n_prime()?, delta, s, rng),
        EstimatorId::PhaseDispatch => phase_model_dispatch(rv, n, spec.need_n_prime()?, delta, s, rng),
        EstimatorId::Classical => {
            let mut ledger = CostLedger::default();
            let (est, _) = subgaussian_estimate(rv, n.ceil() as usize, delta, rng, &mut ledger)?;
            let params = RunParams { n, delta, noise: s.noise, quantile_c: s.quantile_c, ..RunParams::default() };
            Ok(EstimateReport::new(EstimatorId::Classical, "median_of_means", est, rv, ledger, params))
        }
        EstimatorId::Trivial => {
            let params = RunParams { n, n_prime: spec.n_prime, delta, ..RunParams::default() };
            Ok(EstimateReport::new(EstimatorId::Trivial, "zero", vec![0.0; rv.dim()], rv, CostLedger::default(), params))
        }
    }
}

/// Which error norm a failure bound applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    Inf,
    L2,
}

fn classical_bound(rv: &RandomVariable, n: f64, delta: f64, k: f64) -> f64 {
    let m = rv.moments();
    k * ((m.cov_trace / n).sqrt() + (m.spectral_norm * (1.0 / delta).log2() / n).sqrt())
}

/// The error bound a trial is judged against, and the norm it is stated in.
pub fn failure_bound(spec: &TrialSpec, rv: &RandomVariable, report: &EstimateReport) -> (f64, ErrorNorm) {
    let d = rv.dim() as f64;
    let lg = log_factor(rv.dim(), spec.delta);
    let (n, np) = (spec.n, spec.n_prime.unwrap_or(f64::INFINITY));
    let high = || (d.sqrt() / n).max(d / np) * lg;
    let low = || (1.0 / n.sqrt()).max(d / np) * lg;
    match spec.estimator {
        EstimatorId::Bounded => {
            let l2 = spec.l2.unwrap_or_else(|| rv.exp_norm2());
            (l2.sqrt() * lg / n, ErrorNorm::Inf)
        }
        EstimatorId::NearOptimal => (rv.moments().cov_trace.sqrt() * lg / n, ErrorNorm::Inf),
        EstimatorId::Euclidean => {
            if n <= d {
                (classical_bound(rv, n, spec.delta, spec.classical_k), ErrorNorm::L2)
            } else {
                ((d * rv.moments().cov_trace).sqrt() * lg / n, ErrorNorm::L2)
            }
        }
        EstimatorId::Qphase => (high(), ErrorNorm::Inf),
        EstimatorId::Qlowprec => (low(), ErrorNorm::Inf),
        EstimatorId::PhaseDispatch => match report.branch.as_str() {
            "low_precision" => (low(), ErrorNorm::Inf),
            "high_precision" => (high(), ErrorNorm::Inf),
            _ => (1.0, ErrorNorm::Inf),
        },
        EstimatorId::Classical => (classical_bound(rv, n, spec.delta, spec.classical_k), ErrorNorm::L2),
        EstimatorId::Trivial => (1.0, ErrorNorm::Inf),
    }
}

/// Aggregate of one budget point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub estimator: String,
    pub n: f64,
    pub n_prime: Option<f64>,
    pub d: usize,
    pub delta: f64,
    pub median_err_inf: f64,
    pub median_err_l2: f64,
    pub fail_rate: f64,
    pub experiments: f64,
    pub binary_queries: f64,
    pub phase_queries: f64,
    pub classical_samples: u64,
    pub seed_base: u64,
}

/// Every trial's outcome plus the aggregate row.
#[derive(Debug, Clone)]
pub struct TrialBatch {
    pub reports: Vec<Result<EstimateReport, String>>,
    pub row: SweepRow,
}

impl TrialBatch {
    pub fn successes(&self) -> impl Iterator<Item = &EstimateReport> {
        self.reports.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Median with the midpoint rule for even counts; NaN when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Runs `trials` seeded trials on one distribution. Trial `t` uses the seed
/// `seed_base + t`.
pub fn run_trials(spec: &TrialSpec, rv: &RandomVariable, trials: usize, seed_base: u64) -> TrialBatch {
    run_trials_with(spec, trials, seed_base, |_| Ok(rv.clone()))
}

/// Like [`run_trials`], with a distribution built per trial.
///
/// Trials run in parallel; the aggregate is reduced in trial order. A trial
/// that errors counts as a failure and is kept in `reports`.
pub fn run_trials_with<F>(spec: &TrialSpec, trials: usize, seed_base: u64, rv_for_trial: F) -> TrialBatch
where
    F: Fn(usize) -> Result<RandomVariable, String> + Sync,
{
    let outcomes: Vec<(Result<EstimateReport, String>, Option<bool>, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let rv = match rv_for_trial(t) {
                Ok(rv) => rv,
                Err(e) => return (Err(e), None, 0),
            };
            let seed = seed_base.wrapping_add(t as u64);
            let mut rng = SimRng::seed_from_u64(seed);
            match run_estimator(spec, &rv, &mut rng) {
                Ok(rep) => {
                    let (bound, norm) = failure_bound(spec, &rv, &rep);
                    let err = if norm == ErrorNorm::Inf { rep.err_inf } else { rep.err_l2 };
                    (Ok(rep.with_seed(seed)), Some(err > bound), rv.dim())
                }
                Err(e) => (Err(e.to_string()), None, rv.dim()),
            }
        })
        .collect();

    let mut ledger = CostLedger::default();
    let mut inf = Vec::new();
    let mut l2 = Vec::new();
    let mut failures = 0usize;
    let mut d = 0;
    for (rep, failed, dim) in &outcomes {
        d = d.max(*dim);
        match (rep, failed) {
            (Ok(r), Some(f)) => {
                ledger.merge(&r.ledger);
                inf.push(r.err_inf);
                l2.push(r.err_l2);
                failures += *f as usize;
            }
            _ => failures += 1,
        }
    }
    let row = SweepRow {
        estimator: spec.estimator.as_str().into(),
        n: spec.n,
        n_prime: spec.n_prime,
        d,
        delta: spec.delta,
        median_err_inf: median(&mut inf),
        median_err_l2: median(&mut l2),
        fail_rate: failures as f64 / trials as f64,
        experiments: ledger.experiments,
        binary_queries: ledger.binary_queries,
        phase_queries: ledger.phase_queries,
        classical_samples: ledger.classical_samples,
        seed_base,
    };
    TrialBatch { reports: outcomes.into_iter().map(|o| o.0).collect(), row }
}

/// Runs every point of a config and writes its output file, if any: CSV
/// for a `.csv` path, JSON otherwise.
pub fn run_config(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    cfg.validate()?;
    let rv = cfg.source.load()?;
    let rows: Vec<SweepRow> = cfg
        .points()
        .into_iter()
        .map(|(n, np)| run_trials(&cfg.trial_spec(n, np), &rv, cfg.trials, cfg.seed).row)
        .collect();
    if let Some(path) = &cfg.output {
        if path.extension().is_some_and(|e| e == "csv") {
            write_csv(&rows, path)?;
        } else {
            write_json(&rows, path)?;
        }
    }
    Ok(rows)
}

/// Budget column used as the regressor of a slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetField {
    N,
    NPrime,
    Experiments,
    BinaryQueries,
    PhaseQueries,
    ClassicalSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorField {
    MedianErrInf,
    MedianErrL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on `(log₂ x, log₂ y)`. A constant `y` has `r² = 1`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit, HarnessError> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(HarnessError::Fit(format!("{} points", xs.len().min(ys.len()))));
    }
    if let Some(bad) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Fit(format!("nonpositive value {bad}")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log2()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all x values equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r2 })
}

pub fn fit_slope(rows: &[SweepRow], x: BudgetField, y: ErrorField) -> Result<SlopeFit, HarnessError> {
    let xs: Vec<f64> = rows
        .iter()
        .map(|r| match x {
            BudgetField::N => r.n,
            BudgetField::NPrime => r.n_prime.unwrap_or(f64::NAN),
            BudgetField::Experiments => r.experiments,
            BudgetField::BinaryQueries => r.binary_queries,
            BudgetField::PhaseQueries => r.phase_queries,
            BudgetField::ClassicalSamples => r.classical_samples as f64,
        })
        .collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| match y {
            ErrorField::MedianErrInf => r.median_err_inf,
            ErrorField::MedianErrL2 => r.median_err_l2,
        })
        .collect();
    fit_loglog(&xs, &ys)
}

/// Cells of the phase-oracle regime diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `Θ(1)`.
    Trivial,
    /// `Θ(d/n′)`.
    PhaseLimited,
    /// `Θ(√d/n)`.
    ExperimentLimited,
    /// `Θ(1/√n)`.
    SampleLimited,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Trivial => "TRIVIAL",
            Regime::PhaseLimited => "PHASE_LIMITED",
            Regime::ExperimentLimited => "EXPERIMENT_LIMITED",
            Regime::SampleLimited => "SAMPLE_LIMITED",
        }
    }
}

/// Classifies a budget by the term that dominates the optimal error.
/// On a tie between the two terms of the maximum, `PHASE_LIMITED` wins.
pub fn regime_classify(n: f64, n_prime: f64, d: usize, delta: f64) -> Regime {
    let df = d as f64;
    if n_prime < df || n < log_factor(d, delta) {
        return Regime::Trivial;
    }
    let phase = df / n_prime;
    if n >= df {
        if phase >= df.sqrt() / n {
            Regime::PhaseLimited
        } else {
            Regime::ExperimentLimited
        }
    } else if phase >= 1.0 / n.sqrt() {
        Regime::PhaseLimited
    } else {
        Regime::SampleLimited
    }
}
