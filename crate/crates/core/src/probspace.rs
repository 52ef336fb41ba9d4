//! Finite multivariate random variables with exact moments.
//!
//! A [`RandomVariable`] is a finite probability space together with a value
//! table: outcome `k` has probability `prob[k]` and value `X(ω_k) ∈ R^d`.
//! Every estimator in the crate consumes this type. Values are immutable once
//! constructed; the transforming operations (`shift`, `truncate_normalized`,
//! `norm_rv`) return new variables on the same probability space.

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Tolerance on `Σ prob = 1` at construction.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Distribution documents whose probabilities miss 1 by at most this much are
/// renormalized; anything further off is rejected.
pub const SPEC_RENORM_TOL: f64 = 1e-9;
/// Tolerance on the amplitude norm accepted by
/// [`RandomVariable::from_commuting_observables`].
pub const AMPLITUDE_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("random variable has no outcomes")]
    Empty,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("field `prob`: entry {index} = {value} is not a probability")]
    InvalidProbability { index: usize, value: f64 },
    #[error("field `prob`: probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("field `values`: row {row} has length {found}, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("field `{field}`: expected {expected} entries, found {found}")]
    LengthMismatch { field: &'static str, expected: usize, found: usize },
    #[error("field `omega`: duplicate outcome label `{0}`")]
    DuplicateLabel(String),
    #[error("field `values`: non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("clamp bounds require 0 <= a < b, got a = {a}, b = {b}")]
    ClampBounds { a: f64, b: f64 },
    #[error("expected a univariate random variable, got d = {0}")]
    NotUnivariate(usize),
    #[error("quantile level {0} outside [0, 1]")]
    QuantileLevel(f64),
    #[error("vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("amplitudes have squared norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
}

/// Exact summary statistics of a finite random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// `Tr(Σ)`.
    pub cov_trace: f64,
    /// Largest eigenvalue of `Σ`.
    pub spectral_norm: f64,
    /// `E‖X‖₂`.
    pub exp_norm2: f64,
    /// `E‖X‖₂²`.
    pub exp_norm2_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    labels: Vec<String>,
    prob: Vec<f64>,
    /// Row-major `K × d` value table.
    values: Vec<f64>,
    d: usize,
}

/// Returns `x` when `a < ‖x‖₂ ≤ b` and the zero vector otherwise.
pub fn clamp_vec(x: &[f64], a: f64, b: f64) -> Result<Vec<f64>, ProbError> {
    check_clamp_bounds(a, b)?;
    Ok(clamp_vec_unchecked(x, a, b))
}

/// Scalar clamp with the sign of `y` preserved: `y` when `a < |y| ≤ b`, else 0.
pub fn clamp_scalar(y: f64, a: f64, b: f64) -> Result<f64, ProbError> {
    check_clamp_bounds(a, b)?;
    Ok(clamp_scalar_unchecked(y, a, b))
}

fn check_clamp_bounds(a: f64, b: f64) -> Result<(), ProbError> {
    if a.is_nan() || b.is_nan() || a < 0.0 || a >= b {
        return Err(ProbError::ClampBounds { a, b });
    }
    Ok(())
}

pub(crate) fn clamp_vec_unchecked(x: &[f64], a: f64, b: f64) -> Vec<f64> {
    let r = norm2(x);
    if a < r && r <= b {
        x.to_vec()
    } else {
        vec![0.0; x.len()]
    }
}

#[inline]
pub(crate) fn clamp_scalar_unchecked(y: f64, a: f64, b: f64) -> f64 {
    let r = y.abs();
    if a < r && r <= b {
        y
    } else {
        0.0
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

impl RandomVariable {
    /// Builds a random variable from labels, probabilities and value rows.
    pub fn new(labels: Vec<String>, prob: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, ProbError> {
        let d = rows.first().map(|r| r.len()).ok_or(ProbError::Empty)?;
        let mut values = Vec::with_capacity(rows.len() * d);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(ProbError::RaggedRow { row, expected: d, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(labels, prob, values, d)
    }

    /// Like [`RandomVariable::new`] with labels `"0"`, `"1"`, ….
    pub fn from_rows(prob: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, ProbError> {
        let labels = (0..rows.len()).map(|k| k.to_string()).collect();
        Self::new(labels, prob, rows)
    }

    /// Uniform distribution over the given rows.
    pub fn uniform(rows: Vec<Vec<f64>>) -> Result<Self, ProbError> {
        let k = rows.len();
        if k == 0 {
            return Err(ProbError::Empty);
        }
        Self::from_rows(vec![1.0 / k as f64; k], rows)
    }

    pub fn point_mass(x: Vec<f64>) -> Result<Self, ProbError> {
        Self::from_rows(vec![1.0], vec![x])
    }

    /// Builds from a row-major value table of `prob.len()` rows of length `d`.
    pub fn from_flat(labels: Vec<String>, prob: Vec<f64>, values: Vec<f64>, d: usize) -> Result<Self, ProbError> {
        if prob.is_empty() {
            return Err(ProbError::Empty);
        }
        if d == 0 {
            return Err(ProbError::ZeroDimension);
        }
        if labels.len() != prob.len() {
            return Err(ProbError::LengthMismatch { field: "omega", expected: prob.len(), found: labels.len() });
        }
        if values.len() != prob.len() * d {
            return Err(ProbError::LengthMismatch { field: "values", expected: prob.len() * d, found: values.len() / d });
        }
        for (index, &p) in prob.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(ProbError::InvalidProbability { index, value: p });
            }
        }
        let sum: f64 = prob.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ProbError::ProbabilitySum { sum });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProbError::NonFinite { row: i / d, col: i % d });
            }
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ProbError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels, prob, values, d })
    }

    /// Same probability space, new value table. Callers guarantee the shape.
    fn with_values(&self, values: Vec<f64>, d: usize) -> Self {
        debug_assert_eq!(values.len(), self.prob.len() * d);
        Self { labels: self.labels.clone(), prob: self.prob.clone(), values, d }
    }

    /// Applies `f` to every row, keeping the probability space.
    pub fn map_rows(&self, d_out: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self, ProbError> {
        let mut values = Vec::with_capacity(self.len() * d_out);
        for (row, x) in self.rows().enumerate() {
            let y = f(x);
            if y.len() != d_out {
                return Err(ProbError::RaggedRow { row, expected: d_out, found: y.len() });
            }
            values.extend(y);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProbError::NonFinite { row: i / d_out, col: i % d_out });
            }
        }
        Ok(self.with_values(values, d_out))
    }

    /// Number of outcomes `K`.
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    /// `(prob, value)` pairs in outcome order.
    pub fn outcomes(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.prob.iter().copied().zip(self.rows())
    }

    /// `μ = Σ_ω P(ω) X(ω)`.
    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.d];
        for (p, x) in self.outcomes() {
            for (m, v) in mu.iter_mut().zip(x) {
                *m += p * v;
            }
        }
        mu
    }

    pub fn exp_norm2(&self) -> f64 {
        self.outcomes().map(|(p, x)| p * norm2(x)).sum()
    }

    pub fn max_norm2(&self) -> f64 {
        self.rows().map(norm2).fold(0.0, f64::max)
    }

    pub fn max_norm1(&self) -> f64 {
        self.rows().map(norm1).fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        norm_inf(&self.values)
    }

    pub fn moments(&self) -> MomentSummary {
        let mean = self.mean();
        let d = self.d;
        let mut exp_norm2 = 0.0;
        let mut exp_norm2_sq = 0.0;
        let mut cov_trace = 0.0;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for (p, x) in self.outcomes() {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            exp_norm2 += p * sq.sqrt();
            exp_norm2_sq += p * sq;
            for ((c, v), m) in centered.iter_mut().zip(x).zip(&mean) {
                *c = v - m;
            }
            cov_trace += p * centered.iter().map(|c| c * c).sum::<f64>();
            for i in 0..d {
                let pi = p * centered[i];
                if pi == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[(i, j)] += pi * centered[j];
                }
            }
        }
        let spectral_norm = if d == 1 {
            cov_trace
        } else {
            for i in 0..d {
                for j in 0..i {
                    cov[(i, j)] = cov[(j, i)];
                }
            }
            let eig = SymmetricEigen::new(cov);
            eig.eigenvalues.iter().copied().fold(0.0, f64::max)
        };
        MomentSummary {
            mean,
            cov_trace,
            spectral_norm: spectral_norm.clamp(0.0, cov_trace),
            exp_norm2,
            exp_norm2_sq,
        }
    }

    /// `ω ↦ ‖X(ω)‖₂` on the same probability space.
    pub fn norm_rv(&self) -> Self {
        let values = self.rows().map(norm2).collect();
        self.with_values(values, 1)
    }

    /// `ω ↦ X(ω) − η`.
    pub fn shift(&self, eta: &[f64]) -> Result<Self, ProbError> {
        if eta.len() != self.d {
            return Err(ProbError::DimensionMismatch { expected: self.d, found: eta.len() });
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v - eta[i % self.d])
            .collect();
        Ok(self.with_values(values, self.d))
    }

    /// `ω ↦ clamp_vec(X(ω), a_lo, a_hi) / a_hi`, a random variable with
    /// `‖·‖₂ ≤ 1` pointwise.
    pub fn truncate_normalized(&self, a_lo: f64, a_hi: f64) -> Result<Self, ProbError> {
        check_clamp_bounds(a_lo, a_hi)?;
        if !a_hi.is_finite() {
            return Err(ProbError::ClampBounds { a: a_lo, b: a_hi });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for x in self.rows() {
            let r = norm2(x);
            if a_lo < r && r <= a_hi {
                values.extend(x.iter().map(|v| v / a_hi));
            } else {
                values.extend(std::iter::repeat(0.0).take(self.d));
            }
        }
        Ok(self.with_values(values, self.d))
    }

    /// `E[clamp_vec(X, a, b)]`.
    pub fn clamp_mean(&self, a: f64, b: f64) -> Result<Vec<f64>, ProbError> {
        check_clamp_bounds(a, b)?;
        let mut mu = vec![0.0; self.d];
        for (p, x) in self.outcomes() {
            let r = norm2(x);
            if a < r && r <= b {
                for (m, v) in mu.iter_mut().zip(x) {
                    *m += p * v;
                }
            }
        }
        Ok(mu)
    }

    /// Distinct support values of a univariate variable in decreasing order,
    /// each paired with `Pr[X ≥ value]`.
    pub fn upper_tail(&self) -> Result<Vec<(f64, f64)>, ProbError> {
        if self.d != 1 {
            return Err(ProbError::NotUnivariate(self.d));
        }
        let mut pairs: Vec<(f64, f64)> = self.values.iter().copied().zip(self.prob.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        let mut tail = 0.0;
        for (v, p) in pairs {
            tail += p;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = tail,
                _ => out.push((v, tail)),
            }
        }
        Ok(out)
    }

    /// `Q(p) = sup{x : Pr[X ≥ x] ≥ p}` over the finite support. `Q(0) = +∞`.
    ///
    /// Tail sums are compared with a slack of [`PROB_SUM_TOL`] so that levels
    /// such as `p = 1/3` on a uniform three-point support land on the
    /// intended atom despite rounding.
    pub fn exact_quantile(&self, p: f64) -> Result<f64, ProbError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ProbError::QuantileLevel(p));
        }
        let tail = self.upper_tail()?;
        if p == 0.0 {
            return Ok(f64::INFINITY);
        }
        for &(v, t) in &tail {
            if t >= p - PROB_SUM_TOL {
                return Ok(v);
            }
        }
        // Pr[X ≥ min support] = 1 ≥ p, so the loop always returns.
        Ok(tail.last().map(|t| t.0).unwrap_or(f64::NEG_INFINITY))
    }

    /// Random variable induced by measuring commuting observables on a pure
    /// state: outcome `j` has probability `|a_j|²` and value
    /// `(λ_{1,j}, …, λ_{d,j})`.
    pub fn from_commuting_observables(amplitudes: &[Complex64], eigenvalues: &[Vec<f64>]) -> Result<Self, ProbError> {
        let n = amplitudes.len();
        if n == 0 {
            return Err(ProbError::Empty);
        }
        if eigenvalues.is_empty() {
            return Err(ProbError::ZeroDimension);
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > AMPLITUDE_NORM_TOL {
            return Err(ProbError::NotNormalized(norm_sq));
        }
        for (row, r) in eigenvalues.iter().enumerate() {
            if r.len() != n {
                return Err(ProbError::RaggedRow { row, expected: n, found: r.len() });
            }
        }
        let prob: Vec<f64> = amplitudes.iter().map(|a| a.norm_sqr() / norm_sq).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|j| eigenvalues.iter().map(|r| r[j]).collect()).collect();
        Self::from_rows(prob, rows)
    }

    /// Serializes to the distribution-spec JSON document.
    pub fn to_spec_json(&self) -> String {
        let spec = DistributionSpec {
            d: self.d,
            omega: Some(self.labels.clone()),
            prob: self.prob.clone(),
            values: self.rows().map(<[f64]>::to_vec).collect(),
        };
        serde_json::to_string_pretty(&spec).expect("plain data serializes")
    }
}

/// On-disk form of a random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<String>>,
    pub prob: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> ProbError {
    ProbError::Schema { field: field.into(), message: message.into() }
}

fn number_array(v: &Value, field: &str) -> Result<Vec<f64>, ProbError> {
    let arr = v.as_array().ok_or_else(|| schema(field, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| x.as_f64().ok_or_else(|| schema(format!("{field}[{i}]"), "expected a number")))
        .collect()
}

/// Parses a distribution-spec document.
///
/// Probabilities that miss 1 by more than [`PROB_SUM_TOL`] but at most
/// [`SPEC_RENORM_TOL`] are renormalized; larger deviations are rejected.
pub fn parse_distribution_spec(text: &str) -> Result<RandomVariable, ProbError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema("document", e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| schema("document", "expected a JSON object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "d" | "omega" | "prob" | "values") {
            return Err(schema(key.clone(), "unknown field"));
        }
    }
    let d = obj
        .get("d")
        .ok_or_else(|| schema("d", "missing"))?
        .as_u64()
        .filter(|&d| d > 0)
        .ok_or_else(|| schema("d", "expected a positive integer"))? as usize;
    let prob = number_array(obj.get("prob").ok_or_else(|| schema("prob", "missing"))?, "prob")?;
    let rows_v = obj
        .get("values")
        .ok_or_else(|| schema("values", "missing"))?
        .as_array()
        .ok_or_else(|| schema("values", "expected an array of rows"))?;
    let mut rows = Vec::with_capacity(rows_v.len());
    for (i, r) in rows_v.iter().enumerate() {
        let row = number_array(r, &format!("values[{i}]"))?;
        if row.len() != d {
            return Err(ProbError::RaggedRow { row: i, expected: d, found: row.len() });
        }
        rows.push(row);
    }
    if rows.len() != prob.len() {
        return Err(ProbError::LengthMismatch { field: "values", expected: prob.len(), found: rows.len() });
    }
    let labels = match obj.get("omega") {
        None | Some(Value::Null) => (0..prob.len()).map(|k| k.to_string()).collect(),
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| schema("omega", "expected an array of strings"))?;
            let labels: Vec<String> = arr
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    x.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| schema(format!("omega[{i}]"), "expected a string"))
                })
                .collect::<Result<_, _>>()?;
            if labels.len() != prob.len() {
                return Err(ProbError::LengthMismatch { field: "omega", expected: prob.len(), found: labels.len() });
            }
            labels
        }
    };
    for (index, &p) in prob.iter().enumerate() {
        if !(p.is_finite() && p >= 0.0) {
            return Err(ProbError::InvalidProbability { index, value: p });
        }
    }
    let sum: f64 = prob.iter().sum();
    if (sum - 1.0).abs() > SPEC_RENORM_TOL {
        return Err(ProbError::ProbabilitySum { sum });
    }
    let prob = if (sum - 1.0).abs() <= PROB_SUM_TOL {
        prob
    } else {
        prob.iter().map(|p| p / sum).collect()
    };
    RandomVariable::new(labels, prob, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mean_examples() {
        let basis = RandomVariable::uniform((0..4).map(|i| unit(4, i)).collect()).unwrap();
        assert_eq!(basis.mean(), vec![0.25; 4]);
        let pm = RandomVariable::point_mass(vec![0.3, -0.1]).unwrap();
        assert_eq!(pm.mean(), vec![0.3, -0.1]);
        let sym = RandomVariable::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(sym.mean(), vec![0.0, 0.0]);
    }

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    }

    #[test]
    fn moment_examples() {
        let basis = RandomVariable::uniform((0..4).map(|i| unit(4, i)).collect()).unwrap();
        let m = basis.moments();
        assert!(approx(m.cov_trace, 0.75, 1e-15));
        // Σ = I/4 − J/16 has eigenvalues 1/4 (×3) and 0.
        assert!(approx(m.spectral_norm, 0.25, 1e-12));
        let pm = RandomVariable::point_mass(vec![0.3, -0.1]).unwrap().moments();
        assert_eq!((pm.cov_trace, pm.spectral_norm), (0.0, 0.0));
        let pm1 = RandomVariable::uniform(vec![vec![1.0], vec![-1.0]]).unwrap().moments();
        assert_eq!((pm1.cov_trace, pm1.spectral_norm), (1.0, 1.0));
    }

    #[test]
    fn spectral_norm_when_top_eigenvector_is_orthogonal_to_ones() {
        // Σ ∝ [[1, −1], [−1, 1]]: the all-ones vector lies in the kernel.
        let rv = RandomVariable::uniform(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let m = rv.moments();
        assert!(approx(m.spectral_norm, 2.0, 1e-12));
        assert!(approx(m.cov_trace, 2.0, 1e-12));
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_vec(&[3.0, 4.0], 0.0, 5.0).unwrap(), vec![3.0, 4.0]);
        assert_eq!(clamp_vec(&[3.0, 4.0], 5.0, 10.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(clamp_vec(&[0.0, 0.0], 0.0, 1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(clamp_scalar(-0.7, 0.0, 1.0).unwrap(), -0.7);
        assert_eq!(clamp_scalar(1.2, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(clamp_scalar(0.5, 0.5, 1.0).unwrap(), 0.0);
        assert!(clamp_vec(&[1.0], 2.0, 2.0).is_err());
        assert!(clamp_scalar(1.0, 3.0, 2.0).is_err());
        assert_eq!(clamp_vec(&[1e9], 0.0, f64::INFINITY).unwrap(), vec![1e9]);
    }

    #[test]
    fn quantile_examples() {
        let u = RandomVariable::uniform(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(u.exact_quantile(0.5).unwrap(), 2.0);
        assert_eq!(u.exact_quantile(1.0 / 3.0).unwrap(), 3.0);
        assert_eq!(u.exact_quantile(1.0).unwrap(), 1.0);
        let pm = RandomVariable::point_mass(vec![7.0]).unwrap();
        for p in [1e-6, 0.3, 1.0] {
            assert_eq!(pm.exact_quantile(p).unwrap(), 7.0);
        }
        assert!(u.exact_quantile(1.5).is_err());
        let two_d = RandomVariable::point_mass(vec![1.0, 1.0]).unwrap();
        assert!(matches!(two_d.exact_quantile(0.5), Err(ProbError::NotUnivariate(2))));
    }

    #[test]
    fn truncate_examples() {
        let pm = RandomVariable::point_mass(vec![3.0, 4.0]).unwrap();
        assert_eq!(pm.truncate_normalized(0.0, 5.0).unwrap().value(0), &[0.6, 0.8]);
        assert_eq!(pm.truncate_normalized(5.0, 10.0).unwrap().value(0), &[0.0, 0.0]);
        let two = RandomVariable::uniform(vec![vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let t = two.truncate_normalized(2.0, 4.0).unwrap();
        assert_eq!(t.value(0), &[0.0, 0.0]);
        assert_eq!(t.value(1), &[0.75, 0.0]);
        assert_eq!(t.probs(), two.probs());
        assert!(pm.truncate_normalized(2.0, 1.0).is_err());
    }

    #[test]
    fn norm_and_shift_examples() {
        let pm = RandomVariable::point_mass(vec![3.0, 4.0]).unwrap();
        assert_eq!(pm.norm_rv().value(0), &[5.0]);
        let u = RandomVariable::uniform(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap().norm_rv();
        assert_eq!(u.rows().collect::<Vec<_>>(), vec![&[1.0][..], &[1.0][..]]);
        let z = RandomVariable::point_mass(vec![0.0, 0.0]).unwrap().norm_rv();
        assert_eq!(z.value(0), &[0.0]);
        let ones = RandomVariable::point_mass(vec![1.0, 1.0]).unwrap();
        assert_eq!(ones.shift(&[1.0, 1.0]).unwrap().value(0), &[0.0, 0.0]);
        assert_eq!(ones.shift(&[0.0, 0.0]).unwrap(), ones);
        assert!(ones.shift(&[1.0]).is_err());
    }

    #[test]
    fn commuting_observable_examples() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let basis = RandomVariable::from_commuting_observables(&[c(1.0, 0.0), c(0.0, 0.0)], &[vec![2.0, 5.0]]).unwrap();
        assert_eq!(basis.mean(), vec![2.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let eq = RandomVariable::from_commuting_observables(&[c(s, 0.0), c(0.0, s)], &[vec![1.0, -1.0]]).unwrap();
        assert!(eq.mean()[0].abs() < 1e-15);
        let w = RandomVariable::from_commuting_observables(&[c(0.8f64.sqrt(), 0.0), c(0.2f64.sqrt(), 0.0)], &[vec![1.0, 0.0]])
            .unwrap();
        assert!(approx(w.mean()[0], 0.8, 1e-15));
        assert!(matches!(
            RandomVariable::from_commuting_observables(&[c(1.0, 0.0), c(1.0, 0.0)], &[vec![1.0, 0.0]]),
            Err(ProbError::NotNormalized(_))
        ));
    }

    #[test]
    fn spec_parsing() {
        let rv = parse_distribution_spec(r#"{"d": 2, "prob": [0.5, 0.5], "values": [[1, 0], [0, 1]]}"#).unwrap();
        assert_eq!(rv.dim(), 2);
        assert_eq!(rv.labels(), &["0".to_string(), "1".to_string()]);
        let err = parse_distribution_spec(r#"{"d": 1, "prob": [0.5, 0.4], "values": [[1], [0]]}"#).unwrap_err();
        assert!(matches!(err, ProbError::ProbabilitySum { .. }));
        assert!(err.to_string().contains("prob"));
        let err = parse_distribution_spec(r#"{"d": 2, "prob": [0.5, 0.5], "values": [[1, 0], [0]]}"#).unwrap_err();
        assert!(matches!(err, ProbError::RaggedRow { row: 1, .. }));
        assert!(err.to_string().contains("row 1"));
        let err = parse_distribution_spec(r#"{"d": 2, "prob": [1.0], "values": [[1, "x"]]}"#).unwrap_err();
        assert!(err.to_string().contains("values[0]"));
        let err = parse_distribution_spec(r#"{"prob": [1.0], "values": [[1]]}"#).unwrap_err();
        assert!(err.to_string().contains("`d`"));
        let err = parse_distribution_spec(r#"{"d": 1, "omega": ["a", "a"], "prob": [0.5, 0.5], "values": [[1], [2]]}"#)
            .unwrap_err();
        assert!(matches!(err, ProbError::DuplicateLabel(_)));
    }

    #[test]
    fn spec_renormalizes_small_drift() {
        let rv = parse_distribution_spec(r#"{"d": 1, "prob": [0.5, 0.5000000001], "values": [[1], [2]]}"#).unwrap();
        assert!(approx(rv.probs().iter().sum::<f64>(), 1.0, 1e-15));
    }

    #[test]
    fn spec_round_trip_is_exact() {
        let rv = RandomVariable::from_rows(
            vec![0.1, 0.2, 0.7],
            vec![vec![1.0 / 3.0, -2.5e-17], vec![std::f64::consts::PI, 0.0], vec![-1e300, 7.0]],
        )
        .unwrap();
        let back = parse_distribution_spec(&rv.to_spec_json()).unwrap();
        assert_eq!(back, rv);
    }
}
