//! Semantic oracles.
//!
//! Instead of compiling amplitude amplification and phase conversions down to
//! gates, the oracles here produce the exact phase function that those
//! constructions approximate, optionally corrupted by a [`NoiseModel`], and
//! charge a [`CostLedger`] with the corresponding query-complexity formula.
//! Hidden constants default to 1; all costs are model units.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridqft::{GridError, GridSpec};
use crate::probspace::{clamp_scalar_unchecked, ProbError, RandomVariable};

/// Slack used when checking norm and expectation preconditions, so that
/// values produced by exact rescaling are not rejected for rounding.
pub const PRECONDITION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("outcome {index} has ‖X‖₂ = {norm} > 1")]
    NormTooLarge { index: usize, norm: f64 },
    #[error("L2 = {l2} is below the true E‖X‖₂ = {true_value}")]
    L2TooSmall { l2: f64, true_value: f64 },
    #[error("outcome {index} has a coordinate outside [-1/4, 1/4]: {value}")]
    OutOfPhaseRange { index: usize, value: f64 },
    #[error("parameter `{name}` = {value} outside {range}")]
    Parameter { name: &'static str, value: f64, range: &'static str },
    #[error("m = {m} is below the required minimum {min}")]
    GridTooCoarse { m: usize, min: f64 },
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<(), OracleError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(OracleError::Parameter { name, value, range: "(0, 1)" })
    }
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type AxisFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How a separable phase splits across axes.
#[derive(Clone)]
pub enum AxisDecomposition {
    /// `θ_u = Σ_j w_j u_j`.
    Linear(Vec<f64>),
    /// `θ_u = Σ_j f_j(u_j)`.
    PerAxis(Vec<AxisFn>),
}

/// A map `u ↦ θ_u` from grid points to phases.
#[derive(Clone)]
pub struct PhaseFunction {
    d: usize,
    eval: PointFn,
    axes: Option<AxisDecomposition>,
    description: String,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("d", &self.d)
            .field("separable", &self.is_separable())
            .field("description", &self.description)
            .finish()
    }
}

impl PhaseFunction {
    pub fn zero(d: usize) -> Self {
        Self::linear(vec![0.0; d]).with_description("zero")
    }

    /// `θ_u = Σ_j w_j u_j`.
    pub fn linear(w: Vec<f64>) -> Self {
        let d = w.len();
        let wc = w.clone();
        Self {
            d,
            eval: Arc::new(move |u: &[f64]| wc.iter().zip(u).map(|(a, b)| a * b).sum()),
            axes: Some(AxisDecomposition::Linear(w)),
            description: "linear".into(),
        }
    }

    /// A global phase `θ_u = c`.
    pub fn constant(d: usize, c: f64) -> Self {
        let fs: Vec<AxisFn> = (0..d)
            .map(|j| -> AxisFn {
                if j == 0 {
                    Arc::new(move |_| c)
                } else {
                    Arc::new(|_| 0.0)
                }
            })
            .collect();
        Self::separable(fs).with_description("constant")
    }

    /// `θ_u = Σ_j f_j(u_j)`.
    pub fn separable(fs: Vec<AxisFn>) -> Self {
        let d = fs.len();
        let fc = fs.clone();
        Self {
            d,
            eval: Arc::new(move |u: &[f64]| fc.iter().zip(u).map(|(f, x)| f(*x)).sum()),
            axes: Some(AxisDecomposition::PerAxis(fs)),
            description: "separable".into(),
        }
    }

    /// An arbitrary, non-separable phase.
    pub fn general(d: usize, description: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { d, eval: Arc::new(f), axes: None, description: description.into() }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        (self.eval)(u)
    }

    pub fn is_separable(&self) -> bool {
        self.axes.is_some()
    }

    pub fn axes(&self) -> Option<&AxisDecomposition> {
        self.axes.as_ref()
    }

    /// Weights of a linear phase.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match &self.axes {
            Some(AxisDecomposition::Linear(w)) => Some(w),
            _ => None,
        }
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Cost constants shared by every oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Multiplier applied to every complexity formula.
    pub constant: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { constant: 1.0 }
    }
}

/// Running totals of oracle uses, in model units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Uses of the state-preparation unitary `U_P`.
    pub experiments: f64,
    /// Uses of the binary oracle `B_X`.
    pub binary_queries: f64,
    /// Uses of the phase oracle `P_X`.
    pub phase_queries: f64,
    /// Classical draws from the distribution.
    pub classical_samples: u64,
    pub quantile_calls: u64,
}

impl CostLedger {
    pub fn merge(&mut self, other: &CostLedger) {
        self.experiments += other.experiments;
        self.binary_queries += other.binary_queries;
        self.phase_queries += other.phase_queries;
        self.classical_samples += other.classical_samples;
        self.quantile_calls += other.quantile_calls;
    }

    pub fn is_zero(&self) -> bool {
        *self == CostLedger::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Ideal,
    Perturbed,
}

/// Imperfection injected into directional oracles.
///
/// Under `Perturbed`, a seeded set of at most `⌊eta/2·|G|⌋` grid points is
/// "bad" and receives an arbitrary phase error in `(−π, π]`; every other point
/// receives an error `δ` with `|2 sin(δ/2)| ≤ eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    pub eps: f64,
    pub eta: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self { mode: NoiseMode::Ideal, eps: 0.0, eta: 0.0, seed: 0 }
    }

    pub fn perturbed(eps: f64, eta: f64, seed: u64) -> Result<Self, OracleError> {
        check_open_unit("eps", eps)?;
        check_open_unit("eta", eta)?;
        Ok(Self { mode: NoiseMode::Perturbed, eps, eta, seed })
    }

    pub fn is_ideal(&self) -> bool {
        self.mode == NoiseMode::Ideal
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_hash(seed: u64, index: u128, salt: u64) -> f64 {
    let lo = index as u64;
    let hi = (index >> 64) as u64;
    let h = splitmix64(seed ^ splitmix64(lo ^ splitmix64(hi ^ salt)));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The deterministic deviation pattern of a perturbed oracle on one grid.
#[derive(Debug, Clone, Copy)]
pub struct Deviation {
    noise: NoiseModel,
    spec: GridSpec,
    bits: u32,
    multiplier: u128,
    offset: u128,
    bad_count: u128,
}

impl Deviation {
    /// Bad points are the preimage of `[0, ⌊eta/2·|G|⌋)` under a seeded odd
    /// affine permutation of the flat index space, so their number is exact.
    pub fn new(noise: NoiseModel, spec: GridSpec) -> Self {
        let bits = spec.d() as u32 * spec.m().trailing_zeros();
        let bits = bits.min(120);
        let size = 1u128 << bits;
        let multiplier = (splitmix64(noise.seed ^ 0xA5A5) as u128) << 1 | 1;
        let offset = splitmix64(noise.seed ^ 0x5A5A) as u128 % size;
        let bad_count = ((noise.eta / 2.0) * size as f64).floor() as u128;
        Self { noise, spec, bits, multiplier, offset, bad_count }
    }

    pub fn bad_count(&self) -> u128 {
        self.bad_count
    }

    /// `(is_bad, δ)` at a flat grid index.
    pub fn at(&self, flat: u128) -> (bool, f64) {
        let mask = if self.bits == 128 { u128::MAX } else { (1u128 << self.bits) - 1 };
        let permuted = self.multiplier.wrapping_mul(flat).wrapping_add(self.offset) & mask;
        let bad = permuted < self.bad_count;
        let h = unit_hash(self.noise.seed, flat, 0x1234);
        let delta = if bad {
            std::f64::consts::PI * (1.0 - 2.0 * h)
        } else {
            (2.0 * h - 1.0) * 2.0 * (self.noise.eps / 2.0).asin()
        };
        (bad, delta)
    }

    /// Flat index of a grid point.
    pub fn flat_index(&self, u: &[f64]) -> u128 {
        let m = self.spec.m() as u128;
        u.iter().fold(0u128, |acc, &x| acc.wrapping_mul(m).wrapping_add(self.spec.axis_index(x) as u128))
    }
}

/// Applies the noise model to a phase function. `Ideal` is the identity.
pub fn perturb(phase: &PhaseFunction, noise: &NoiseModel, spec: &GridSpec) -> PhaseFunction {
    if noise.is_ideal() {
        return phase.clone();
    }
    let dev = Deviation::new(*noise, *spec);
    let base = phase.clone();
    let desc = format!("{} perturbed(eps={}, eta={}, seed={})", phase.description(), noise.eps, noise.eta, noise.seed);
    PhaseFunction::general(phase.dim(), &desc, move |u: &[f64]| base.eval(u) + dev.at(dev.flat_index(u)).1)
}

/// `θ_u = m·E[clamp(α⟨u,X⟩, 0, 1)]`, the phase of the binary-oracle
/// directional mean oracle.
///
/// When `α·‖X(ω)‖₁·(1/2 − 1/(2m)) ≤ 1` for every outcome, no grid point can
/// activate the clamp and the phase is exactly the linear map
/// `u ↦ mα⟨u, μ⟩`; the result then carries that decomposition and is treated
/// as separable. The evaluator always computes the clamped sum literally.
///
/// Charges `C·m·√L2·⌈log₂(1/eps)⌉²` experiments and binary queries.
pub fn directional_phases_binary(
    rv: &RandomVariable,
    l2: f64,
    m: usize,
    alpha: f64,
    eps: f64,
    cost: &CostModel,
    ledger: &mut CostLedger,
) -> Result<PhaseFunction, OracleError> {
    if !(l2 > 0.0 && l2 <= 1.0) {
        return Err(OracleError::Parameter { name: "L2", value: l2, range: "(0, 1]" });
    }
    check_open_unit("alpha", alpha)?;
    check_open_unit("eps", eps)?;
    for (index, x) in rv.rows().enumerate() {
        let norm = crate::probspace::norm2(x);
        if norm > 1.0 + PRECONDITION_TOL {
            return Err(OracleError::NormTooLarge { index, norm });
        }
    }
    let en = rv.exp_norm2();
    if en > l2 * (1.0 + PRECONDITION_TOL) {
        return Err(OracleError::L2TooSmall { l2, true_value: en });
    }
    if (m as f64) < 1.0 / l2 {
        return Err(OracleError::GridTooCoarse { m, min: 1.0 / l2 });
    }
    let log_term = (1.0 / eps).log2().ceil();
    let charge = cost.constant * m as f64 * l2.sqrt() * log_term * log_term;
    ledger.experiments += charge;
    ledger.binary_queries += charge;

    let mf = m as f64;
    let shared = Arc::new(rv.clone());
    let eval_rv = Arc::clone(&shared);
    let eval = move |u: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (p, x) in eval_rv.outcomes() {
            let dot: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
            acc += p * clamp_scalar_unchecked(alpha * dot, 0.0, 1.0);
        }
        mf * acc
    };
    let reach = alpha * rv.max_norm1() * (0.5 - 0.5 / mf);
    let mut phase = PhaseFunction::general(rv.dim(), "binary directional mean", eval);
    if reach <= 1.0 {
        let w = rv.mean().iter().map(|mu| mf * alpha * mu).collect();
        phase.axes = Some(AxisDecomposition::Linear(w));
        phase.description = "binary directional mean (clamp inactive on G)".into();
    }
    Ok(phase)
}

/// `θ_u = m⟨u, E X⟩` for variables with values in `[−1/4, 1/4]^d`, as
/// assembled from phase-oracle queries.
///
/// Charges `C·√d·m·⌈log₂(1/(eps·eta))⌉²` experiments and
/// `C·d·m·⌈log₂(1/(eps·eta))⌉⁴` phase queries.
pub fn directional_phases_phase_model(
    rv: &RandomVariable,
    m: usize,
    eps: f64,
    eta: f64,
    cost: &CostModel,
    ledger: &mut CostLedger,
) -> Result<PhaseFunction, OracleError> {
    check_phase_range(rv)?;
    check_open_unit("eps", eps)?;
    check_open_unit("eta", eta)?;
    let d = rv.dim() as f64;
    let min = eps / (6.0 * d.sqrt());
    if (m as f64) < min {
        return Err(OracleError::GridTooCoarse { m, min });
    }
    let l = (1.0 / (eps * eta)).log2().ceil();
    ledger.experiments += cost.constant * d.sqrt() * m as f64 * l * l;
    ledger.phase_queries += cost.constant * d * m as f64 * l.powi(4);
    let mf = m as f64;
    let w = rv.mean().iter().map(|mu| mf * mu).collect();
    Ok(PhaseFunction::linear(w).with_description("phase-model directional mean"))
}

/// Verifies that every coordinate lies in `[−1/4, 1/4]`.
pub fn check_phase_range(rv: &RandomVariable) -> Result<(), OracleError> {
    for (index, x) in rv.rows().enumerate() {
        if let Some(&value) = x.iter().find(|v| v.abs() > 0.25) {
            return Err(OracleError::OutOfPhaseRange { index, value });
        }
    }
    Ok(())
}

/// How quantile queries are answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    /// Seeded draw from the guarantee interval, with seeded failures.
    #[default]
    Simulated,
    /// Always the exact quantile `Q(p)`.
    Exact,
}

/// Approximate quantile `Q̃` with `Q(p) ≤ Q̃ ≤ Q(cp)` except with probability
/// `δ`, when an arbitrary support value is returned.
///
/// Charges `C·⌈log₂(1/δ)⌉/√p` experiments and binary queries.
#[allow(clippy::too_many_arguments)]
pub fn quantile_oracle<R: Rng + ?Sized>(
    rv_scalar: &RandomVariable,
    p: f64,
    delta: f64,
    c: f64,
    mode: QuantileMode,
    rng: &mut R,
    cost: &CostModel,
    ledger: &mut CostLedger,
) -> Result<f64, OracleError> {
    // Order 2^0 = 1 is requested by the first slice of the near-optimal estimator.
    if !(p > 0.0 && p <= 1.0) {
        return Err(OracleError::Parameter { name: "p", value: p, range: "(0, 1]" });
    }
    check_open_unit("delta", delta)?;
    check_open_unit("c", c)?;
    let tail = rv_scalar.upper_tail()?;
    let charge = cost.constant * (1.0 / delta).log2().ceil() / p.sqrt();
    ledger.experiments += charge;
    ledger.binary_queries += charge;
    ledger.quantile_calls += 1;
    let lo = rv_scalar.exact_quantile(p)?;
    if mode == QuantileMode::Exact {
        return Ok(lo);
    }
    let hi = rv_scalar.exact_quantile(c * p)?;
    if rng.gen::<f64>() < delta {
        return Ok(tail[rng.gen_range(0..tail.len())].0);
    }
    let candidates: Vec<f64> = tail.iter().map(|t| t.0).filter(|&v| lo <= v && v <= hi).collect();
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

/// The three conversion primitives whose costs the oracle formulas absorb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conversion {
    /// `t·log₂(1/ε)` uses of the block encoding.
    AmplitudeAmplification { t: f64, eps: f64 },
    /// `t + log₂(1/ε)` uses of the amplitude unitary.
    AmpToPhase { t: f64, eps: f64 },
    /// `log₂(1/ε)/δ` uses of the phase unitary.
    PhaseToAmp { eps: f64, delta: f64 },
}

pub fn conversion_cost(kind: Conversion, cost: &CostModel) -> Result<f64, OracleError> {
    let check_eps = |eps: f64| {
        if eps > 0.0 && eps <= 1.0 {
            Ok((1.0 / eps).log2())
        } else {
            Err(OracleError::Parameter { name: "eps", value: eps, range: "(0, 1]" })
        }
    };
    let check_t = |t: f64| {
        if t >= 0.0 && t.is_finite() {
            Ok(t)
        } else {
            Err(OracleError::Parameter { name: "t", value: t, range: "[0, ∞)" })
        }
    };
    let units = match kind {
        Conversion::AmplitudeAmplification { t, eps } => check_t(t)? * check_eps(eps)?,
        Conversion::AmpToPhase { t, eps } => check_t(t)? + check_eps(eps)?,
        Conversion::PhaseToAmp { eps, delta } => {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(OracleError::Parameter { name: "delta", value: delta, range: "(0, ∞)" });
            }
            check_eps(eps)? / delta
        }
    };
    Ok(cost.constant * units)
}

/// Fraction of grid points with `α|⟨u,x⟩| ≥ ‖x‖₂`, by enumeration.
pub fn vector_tail_fraction(spec: &GridSpec, x: &[f64], alpha: f64, cap: usize) -> Result<f64, OracleError> {
    let norm = crate::probspace::norm2(x);
    let pts = spec.points(cap)?;
    let hits = pts
        .iter()
        .filter(|u| alpha * u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs() >= norm)
        .count();
    Ok(hits as f64 / pts.len() as f64)
}

/// Fraction of grid points with `α·E|⟨u,X⟩| ≥ E‖X‖₂`, by enumeration.
pub fn rv_tail_fraction(spec: &GridSpec, rv: &RandomVariable, alpha: f64, cap: usize) -> Result<f64, OracleError> {
    let en = rv.exp_norm2();
    let pts = spec.points(cap)?;
    let hits = pts
        .iter()
        .filter(|u| {
            let e: f64 = rv
                .outcomes()
                .map(|(p, x)| p * x.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>().abs())
                .sum();
            alpha * e >= en
        })
        .count();
    Ok(hits as f64 / pts.len() as f64)
}

/// `‖Σ_u (e^{iθ_u} − e^{iθ'_u}) |u⟩‖ / √|G|`, the distance between the two
/// oracle outputs on the uniform superposition.
pub fn phase_state_distance(a: &PhaseFunction, b: &PhaseFunction, spec: &GridSpec, cap: usize) -> Result<f64, OracleError> {
    let pts = spec.points(cap)?;
    let sum: f64 = pts
        .iter()
        .map(|u| {
            let diff = a.eval(u) - b.eval(u);
            // |e^{iφ} − 1|² = 4 sin²(φ/2)
            4.0 * (diff / 2.0).sin().powi(2)
        })
        .sum();
    Ok((sum / pts.len() as f64).sqrt())
}
