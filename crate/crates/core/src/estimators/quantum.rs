//! The quantum estimators, run against the simulated oracles.
//!
//! Each run prepares its grid state once, then draws every repetition's
//! measurement from it. Oracle charges are booked once per repetition, as if
//! the state had been rebuilt each time.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classical::{mom_groups, sample, subgaussian_estimate};
use super::{check_delta, coordinate_median, log_factor, EstimateReport, EstimatorError, EstimatorId, RunParams, Settings};
use crate::gridqft::{GridSpec, GridState, MAX_AXIS_LEN};
use crate::oracles::{
    check_phase_range, directional_phases_binary, directional_phases_phase_model, perturb, quantile_oracle,
    CostLedger, NoiseMode, OracleError, PhaseFunction, PRECONDITION_TOL,
};
use crate::probspace::{norm2, RandomVariable};

/// Oracle accuracy used by the bounded estimator.
pub const BOUNDED_EPS: f64 = 1.0 / 25.0;
/// Oracle accuracy and failure budget used by the phase-oracle estimators.
pub const PHASE_EPS: f64 = 0.058_925_565_098_878_96; // 1/(12√2)
pub const PHASE_ETA: f64 = 1.0 / 288.0;

fn pow2_grid(exponent: f64) -> Result<usize, EstimatorError> {
    let e = exponent.max(0.0);
    if e > MAX_AXIS_LEN.trailing_zeros() as f64 {
        return Err(EstimatorError::Precondition(format!("grid size 2^{e} exceeds 2^50 points per axis")));
    }
    Ok(1usize << e as u32)
}

/// Parameters derived by the bounded estimator before any oracle call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedPlan {
    /// `log₂(d/δ)`.
    pub log_factor: f64,
    pub early_exit: bool,
    pub alpha: f64,
    pub m: usize,
    pub reps: usize,
}

impl BoundedPlan {
    pub fn new(d: usize, l2: f64, n: f64, delta: f64) -> Result<Self, EstimatorError> {
        let lg = log_factor(d, delta);
        let reps = (18.0 * lg).ceil() as usize;
        if n <= lg / l2.sqrt() {
            return Ok(Self { log_factor: lg, early_exit: true, alpha: 0.0, m: 0, reps });
        }
        let alpha = 1.0 / (400.0 * PI * n * (d as f64).sqrt()).log2().sqrt();
        let m = pow2_grid((8.0 * PI / alpha * n / (l2.sqrt() * lg)).log2().ceil())?;
        Ok(Self { log_factor: lg, early_exit: false, alpha, m, reps })
    }
}

fn verify_bounded_input(rv: &RandomVariable, l2: f64) -> Result<(), EstimatorError> {
    if !(l2 > 0.0 && l2 <= 1.0) {
        return Err(EstimatorError::Parameter { name: "L2", value: l2, range: "(0, 1]" });
    }
    for (index, x) in rv.rows().enumerate() {
        let norm = norm2(x);
        if norm > 1.0 + PRECONDITION_TOL {
            return Err(OracleError::NormTooLarge { index, norm }.into());
        }
    }
    let en = rv.exp_norm2();
    if en > l2 * (1.0 + PRECONDITION_TOL) {
        return Err(OracleError::L2TooSmall { l2, true_value: en }.into());
    }
    Ok(())
}

/// The state measured by the bounded estimator, `QFT⁻¹ e^{iθ} |G⟩`, with the
/// per-repetition oracle charge.
pub fn bounded_state(
    rv: &RandomVariable,
    l2: f64,
    plan: &BoundedPlan,
    settings: &Settings,
) -> Result<(GridState, CostLedger), EstimatorError> {
    let spec = GridSpec::new(plan.m, rv.dim())?;
    let mut one = CostLedger::default();
    let theta = directional_phases_binary(rv, l2, plan.m, plan.alpha, BOUNDED_EPS, &settings.cost, &mut one)?;
    Ok((prepare(spec, &theta, settings)?, one))
}

fn prepare(spec: GridSpec, theta: &PhaseFunction, settings: &Settings) -> Result<GridState, EstimatorError> {
    let theta = perturb(theta, &settings.noise, &spec);
    Ok(GridState::uniform_superposition(spec)
        .with_lattice_cap(settings.lattice_cap)
        .apply_phase_function(&theta)?
        .inverse_qft())
}

fn draw_scaled<R: Rng + ?Sized>(
    state: &GridState,
    reps: usize,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    let sampler = state.sampler()?;
    Ok((0..reps).map(|_| sampler.sample_point(rng).into_iter().map(|v| scale * v).collect()).collect())
}

fn charge_reps(ledger: &mut CostLedger, one: &CostLedger, reps: usize) {
    for _ in 0..reps {
        ledger.merge(one);
    }
}

fn zeros_report(id: EstimatorId, branch: &str, rv: &RandomVariable, params: RunParams) -> EstimateReport {
    EstimateReport::new(id, branch, vec![0.0; rv.dim()], rv, CostLedger::default(), params)
}

/// Bounded multivariate estimator for `‖X‖₂ ≤ 1` with `E‖X‖₂ ≤ L2`.
pub fn bounded<R: Rng + ?Sized>(
    rv: &RandomVariable,
    l2: f64,
    n: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    check_delta(delta)?;
    if !(n >= 1.0) {
        return Err(EstimatorError::Parameter { name: "n", value: n, range: "[1, ∞)" });
    }
    verify_bounded_input(rv, l2)?;
    let params = RunParams {
        n,
        delta,
        l2: Some(l2),
        noise: settings.noise,
        quantile_c: settings.quantile_c,
        ..RunParams::default()
    };
    let plan = BoundedPlan::new(rv.dim(), l2, n, delta)?;
    if plan.early_exit {
        return Ok(zeros_report(EstimatorId::Bounded, "early_exit", rv, params));
    }
    let (state, one) = bounded_state(rv, l2, &plan, settings)?;
    let mut ledger = CostLedger::default();
    charge_reps(&mut ledger, &one, plan.reps);
    let draws = draw_scaled(&state, plan.reps, 2.0 * PI / plan.alpha, rng)?;
    let est = coordinate_median(&draws)?;
    let branch = if state.is_product() { "product" } else { "full_state" };
    Ok(EstimateReport::new(EstimatorId::Bounded, branch, est, rv, ledger, params))
}

/// Quantities the near-optimal estimator's analysis reasons about, recorded
/// during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearOptimalTrace {
    pub k: usize,
    pub n_prime: f64,
    pub eta: Vec<f64>,
    /// `a_0, …, a_k` after forcing monotonicity.
    pub a: Vec<f64>,
    /// `E‖Y‖₂²` for `Y = X − η`.
    pub exp_norm_sq: f64,
    /// `E‖Y_j‖₂` of each normalized slice.
    pub slice_exp_norm: Vec<f64>,
    /// Exact `E[Y_j]`.
    pub slice_means: Vec<Vec<f64>>,
    /// Estimates `μ̃_j`.
    pub slice_estimates: Vec<Vec<f64>>,
    /// Branch taken by each slice: `skipped`, `early_exit`, `product` or `full_state`.
    pub slice_branch: Vec<String>,
    /// `E[clamp(Y, a_k, ∞)]`.
    pub tail_mean: Vec<f64>,
}

/// `k = ⌈2 log₂(2√2 n / log₂(d/δ))⌉` and
/// `n′ = n(k+1)·4 log₂(5kd/δ) / (√c · log₂(d/δ))`.
pub fn near_optimal_sizes(d: usize, n: f64, delta: f64, c: f64) -> (usize, f64) {
    let lg = log_factor(d, delta);
    let k = (2.0 * (2.0 * 2f64.sqrt() * n / lg).log2()).ceil().max(1.0) as usize;
    let kf = k as f64;
    let n_prime = n * (kf + 1.0) * 4.0 * (5.0 * kf * d as f64 / delta).log2() / (c.sqrt() * lg);
    (k, n_prime)
}

/// Near-optimal estimator for arbitrary finite-variance `X`.
pub fn near_optimal<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    near_optimal_traced(rv, n, delta, settings, rng).map(|(r, _)| r)
}

pub fn near_optimal_traced<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<(EstimateReport, NearOptimalTrace), EstimatorError> {
    check_delta(delta)?;
    let d = rv.dim();
    let lg = log_factor(d, delta);
    if !(n >= lg) {
        return Err(EstimatorError::Precondition(format!("n = {n} is below log₂(d/δ) = {lg}")));
    }
    let c = settings.quantile_c;
    let (k, n_prime) = near_optimal_sizes(d, n, delta, c);
    let sub_delta = delta / (5.0 * k as f64);
    let mut ledger = CostLedger::default();
    let mut notes = Vec::new();

    let cls_delta = delta / 2.0;
    let cls_n = 4 * mom_groups(usize::MAX, cls_delta);
    let (eta, _) = subgaussian_estimate(rv, cls_n, cls_delta, rng, &mut ledger)?;
    let y = rv.shift(&eta)?;
    let norms = y.norm_rv();

    let mut a = Vec::with_capacity(k + 1);
    let mut slice_exp_norm = Vec::with_capacity(k + 1);
    let mut slice_means = Vec::with_capacity(k + 1);
    let mut slice_estimates = Vec::with_capacity(k + 1);
    let mut slice_branch = Vec::with_capacity(k + 1);
    let mut estimate = eta.clone();
    let mut prev = 0.0;
    for j in 0..=k {
        let p = 2f64.powi(-(j as i32));
        let raw = quantile_oracle(&norms, p, sub_delta, c, settings.quantile_mode, rng, &settings.cost, &mut ledger)?;
        let aj = if raw < prev {
            notes.push(format!("a_{j} = {raw} below a_{} = {prev}; raised to keep slices nested", j as i64 - 1));
            prev
        } else {
            raw
        };
        a.push(aj);
        if aj == prev {
            slice_exp_norm.push(0.0);
            slice_means.push(vec![0.0; d]);
            slice_estimates.push(vec![0.0; d]);
            slice_branch.push("skipped".into());
            continue;
        }
        let yj = y.truncate_normalized(prev, aj)?;
        let en = yj.exp_norm2();
        let mut l2 = 2f64.powi(1 - j as i32).min(1.0);
        if en > l2 {
            notes.push(format!("slice {j}: E‖Y_j‖₂ = {en} exceeds {l2}; bound relaxed to 1"));
            l2 = 1.0;
        }
        let rep = bounded(&yj, l2, n_prime, sub_delta, settings, rng)?;
        ledger.merge(&rep.ledger);
        for (e, v) in estimate.iter_mut().zip(&rep.estimate) {
            *e += aj * v;
        }
        slice_exp_norm.push(en);
        slice_means.push(rep.truth.clone());
        slice_estimates.push(rep.estimate);
        slice_branch.push(rep.branch);
        prev = aj;
    }
    let tail_mean = y.clamp_mean(a[k], f64::INFINITY)?;
    let params = RunParams {
        n,
        n_prime: Some(n_prime),
        delta,
        l2: None,
        noise: settings.noise,
        quantile_c: c,
        seed: None,
    };
    let mut report = EstimateReport::new(EstimatorId::NearOptimal, "quantum", estimate, rv, ledger, params);
    report.notes = notes;
    let trace = NearOptimalTrace {
        k,
        n_prime,
        eta,
        a,
        exp_norm_sq: y.rows().zip(y.probs()).map(|(x, p)| p * norm2(x).powi(2)).sum(),
        slice_exp_norm,
        slice_means,
        slice_estimates,
        slice_branch,
        tail_mean,
    };
    Ok((report, trace))
}

/// Euclidean-norm estimator: classical median-of-means when `n ≤ d`, the
/// near-optimal quantum estimator otherwise.
pub fn euclidean<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    check_delta(delta)?;
    let d = rv.dim();
    let lg = log_factor(d, delta);
    if !(n >= lg) {
        return Err(EstimatorError::Precondition(format!("n = {n} is below log₂(d/δ) = {lg}")));
    }
    if n <= d as f64 {
        let mut ledger = CostLedger::default();
        let (est, _) = subgaussian_estimate(rv, n.ceil() as usize, delta, rng, &mut ledger)?;
        let params = RunParams { n, delta, noise: settings.noise, quantile_c: settings.quantile_c, ..RunParams::default() };
        return Ok(EstimateReport::new(EstimatorId::Euclidean, "classical", est, rv, ledger, params));
    }
    let mut rep = near_optimal(rv, n, delta, settings, rng)?;
    rep.estimator_id = EstimatorId::Euclidean;
    Ok(rep)
}

/// Grid size of the phase-oracle estimators, `2^max(0, ⌈log₂(8πk/(√d·log₂(d/δ)))⌉)`.
pub fn phase_grid(d: usize, k: f64, delta: f64) -> Result<usize, EstimatorError> {
    let lg = log_factor(d, delta);
    pow2_grid((8.0 * PI * k / ((d as f64).sqrt() * lg)).log2().ceil())
}

/// `QFT⁻¹ e^{iθ}|G⟩` for the phase-model oracle, with its per-call charge.
pub fn phase_state(rv: &RandomVariable, m: usize, settings: &Settings) -> Result<(GridState, CostLedger), EstimatorError> {
    let spec = GridSpec::new(m, rv.dim())?;
    let mut one = CostLedger::default();
    let theta = directional_phases_phase_model(rv, m, PHASE_EPS, PHASE_ETA, &settings.cost, &mut one)?;
    Ok((prepare(spec, &theta, settings)?, one))
}

fn phase_notes(settings: &Settings) -> Vec<String> {
    if settings.noise.mode == NoiseMode::Perturbed {
        let budget = settings.noise.eta + settings.noise.eps.powi(2);
        vec![format!("noise eta + eps² = {budget} (analysis assumes ≤ 1/144)")]
    } else {
        Vec::new()
    }
}

fn verify_phase_budget(d: usize, n: f64, n_prime: f64, delta: f64) -> Result<(), EstimatorError> {
    let lg = log_factor(d, delta);
    if !(n >= lg) {
        return Err(EstimatorError::Precondition(format!("n = {n} is below log₂(d/δ) = {lg}")));
    }
    let need = (d as f64).sqrt() * lg;
    if !(n_prime >= need) {
        return Err(EstimatorError::Precondition(format!("n′ = {n_prime} is below √d·log₂(d/δ) = {need}")));
    }
    Ok(())
}

fn qphase_core<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    n_prime: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<(Vec<f64>, CostLedger, &'static str), EstimatorError> {
    let d = rv.dim();
    let k = n.min(n_prime / (d as f64).sqrt()).floor();
    let m = phase_grid(d, k, delta)?;
    let reps = (18.0 * log_factor(d, delta)).ceil() as usize;
    let (state, one) = phase_state(rv, m, settings)?;
    let mut ledger = CostLedger::default();
    charge_reps(&mut ledger, &one, reps);
    let draws = draw_scaled(&state, reps, 2.0 * PI, rng)?;
    let branch = if state.is_product() { "product" } else { "full_state" };
    Ok((coordinate_median(&draws)?, ledger, branch))
}

fn run_params(n: f64, n_prime: f64, delta: f64, settings: &Settings) -> RunParams {
    RunParams {
        n,
        n_prime: Some(n_prime),
        delta,
        l2: None,
        noise: settings.noise,
        quantile_c: settings.quantile_c,
        seed: None,
    }
}

/// High-precision phase-oracle estimator for values in `[−1/4, 1/4]^d`.
pub fn qphase<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    n_prime: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    check_delta(delta)?;
    check_phase_range(rv)?;
    verify_phase_budget(rv.dim(), n, n_prime, delta)?;
    let (est, ledger, branch) = qphase_core(rv, n, n_prime, delta, settings, rng)?;
    let mut rep = EstimateReport::new(EstimatorId::Qphase, branch, est, rv, ledger, run_params(n, n_prime, delta, settings));
    rep.notes = phase_notes(settings);
    Ok(rep)
}

/// `k′ = ⌊2n / log₂(d/δ)⌋`, the classical sample count per outer round.
pub fn lowprec_sample_count(d: usize, n: f64, delta: f64) -> usize {
    (2.0 * n / log_factor(d, delta)).floor() as usize
}

fn qlowprec_core<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    n_prime: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<(Vec<f64>, CostLedger), EstimatorError> {
    let d = rv.dim();
    let lg = log_factor(d, delta);
    let k_samples = lowprec_sample_count(d, n, delta).max(1);
    let outer = (32.0 * lg).ceil() as usize;
    let m = phase_grid(d, 2.0 * n_prime / (d as f64).sqrt(), delta)?;
    let mut ledger = CostLedger::default();
    let mut draws = Vec::with_capacity(outer);
    for _ in 0..outer {
        let batch = sample(rv, k_samples, rng, &mut ledger);
        ledger.experiments += k_samples as f64;
        let empirical = RandomVariable::uniform(batch.draws)?;
        let (state, one) = phase_state(&empirical, m, settings)?;
        ledger.phase_queries += one.phase_queries;
        draws.extend(draw_scaled(&state, 1, 2.0 * PI, rng)?);
    }
    Ok((coordinate_median(&draws)?, ledger))
}

/// Low-precision phase-oracle estimator: phase estimation against the
/// empirical distribution of `⌊2n/log₂(d/δ)⌋` classical draws, repeated.
pub fn qlowprec<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    n_prime: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    check_delta(delta)?;
    check_phase_range(rv)?;
    verify_phase_budget(rv.dim(), n, n_prime, delta)?;
    let (est, ledger) = qlowprec_core(rv, n, n_prime, delta, settings, rng)?;
    let mut rep =
        EstimateReport::new(EstimatorId::Qlowprec, "empirical", est, rv, ledger, run_params(n, n_prime, delta, settings));
    rep.notes = phase_notes(settings);
    Ok(rep)
}

/// Three-way dispatch of the phase-oracle model: zero output when `n′ < d`
/// or `n < log₂(d/δ)`, the low-precision estimator when `n < d`, the
/// high-precision one otherwise.
pub fn phase_model_dispatch<R: Rng + ?Sized>(
    rv: &RandomVariable,
    n: f64,
    n_prime: f64,
    delta: f64,
    settings: &Settings,
    rng: &mut R,
) -> Result<EstimateReport, EstimatorError> {
    check_delta(delta)?;
    check_phase_range(rv)?;
    let d = rv.dim() as f64;
    let lg = log_factor(rv.dim(), delta);
    let params = run_params(n, n_prime, delta, settings);
    let (est, ledger, branch) = if n_prime < d || n < lg {
        (vec![0.0; rv.dim()], CostLedger::default(), "trivial")
    } else if n < d {
        let (est, ledger) = qlowprec_core(rv, n, n_prime, delta, settings, rng)?;
        (est, ledger, "low_precision")
    } else {
        let (est, ledger, _) = qphase_core(rv, n, n_prime, delta, settings, rng)?;
        (est, ledger, "high_precision")
    };
    let mut rep = EstimateReport::new(EstimatorId::PhaseDispatch, branch, est, rv, ledger, params);
    rep.notes = phase_notes(settings);
    Ok(rep)
}
