//! Lower-bound instance families.
//!
//! These generators build the distributions used in the hardness reductions.
//! They are used to probe classical error floors and to check that each
//! construction has its designed mean and covariance trace. Query lower bounds
//! themselves cannot be observed with semantic oracles, which see the whole
//! distribution.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probspace::{ProbError, RandomVariable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardnessError {
    #[error("{name} = {value} must be a power of two")]
    NotPowerOfTwo { name: &'static str, value: usize },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), HardnessError> {
    if cond {
        Ok(())
    } else {
        Err(HardnessError::Precondition(msg()))
    }
}

/// An input of Search∘Parity: `N` rows of `M` bits, half of them of weight
/// `⌊M/2⌋` (`b_i = 0`) and the rest of weight `⌊M/2⌋ + 1` (`b_i = 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParityInstance {
    pub a: Vec<Vec<u8>>,
    pub b: Vec<u8>,
    pub n_rows: usize,
    pub m_cols: usize,
}

impl SearchParityInstance {
    /// `b` recomputed from the row weights of `A`.
    pub fn parity_vector(&self) -> Vec<u8> {
        let half = self.m_cols / 2;
        self.a.iter().map(|row| (row.iter().map(|&x| x as usize).sum::<usize>() != half) as u8).collect()
    }
}

pub fn search_parity_instance<R: Rng + ?Sized>(n_rows: usize, m_cols: usize, rng: &mut R) -> Result<SearchParityInstance, HardnessError> {
    require(n_rows >= 1 && m_cols >= 1, || format!("N = {n_rows} and M = {m_cols} must be at least 1"))?;
    let mut b: Vec<u8> = (0..n_rows).map(|i| (i >= n_rows / 2) as u8).collect();
    b.shuffle(rng);
    let half = m_cols / 2;
    let a = b
        .iter()
        .map(|&bi| {
            let weight = half + bi as usize;
            let mut row: Vec<u8> = (0..m_cols).map(|j| (j < weight) as u8).collect();
            row.shuffle(rng);
            row
        })
        .collect();
    Ok(SearchParityInstance { a, b, n_rows, m_cols })
}

/// A uniformly random bit vector of length `len` with exactly `ones` ones.
pub fn balanced_bits<R: Rng + ?Sized>(len: usize, ones: usize, rng: &mut R) -> Vec<u8> {
    let mut b: Vec<u8> = (0..len).map(|i| (i < ones) as u8).collect();
    b.shuffle(rng);
    b
}

/// Sylvester Hadamard matrix with entries `±1/√d`; row `i`, column `j` has
/// sign `(−1)^{popcount(i & j)}`.
pub fn hadamard(d: usize) -> Result<Vec<Vec<f64>>, HardnessError> {
    if !d.is_power_of_two() {
        return Err(HardnessError::NotPowerOfTwo { name: "d", value: d });
    }
    let s = (d as f64).recip().sqrt();
    Ok((0..d)
        .map(|i| (0..d).map(|j| if (i & j).count_ones() % 2 == 0 { s } else { -s }).collect())
        .collect())
}

/// A generated instance with the moments its construction is designed to have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub family: String,
    pub params: serde_json::Value,
    #[serde(skip)]
    pub rv: Option<RandomVariable>,
    pub designed_mean: Vec<f64>,
    pub designed_cov_trace: Option<f64>,
}

/// `X(i) = ασ√(n/((α²n−α)/2))·b_i·H_i` on `Ω = [αn]` uniform, where `H_i` are
/// the first `αn` rows of the `d×d` Hadamard matrix.
///
/// Designed moments: `Tr Σ = σ²` and `E X = σ/√(n(α²n−α)/2)·Hᵀb`.
pub fn hard_rv_low_precision(n: usize, d: usize, sigma: f64, b: &[u8], alpha: usize) -> Result<HardInstance, HardnessError> {
    let h = hadamard(d)?;
    let rows_used = alpha * n;
    require(n >= 1 && alpha >= 1, || "n and α must be at least 1".into())?;
    require(rows_used <= d, || format!("αn = {rows_used} exceeds d = {d}"))?;
    require(b.len() == rows_used, || format!("b has length {} but αn = {rows_used}", b.len()))?;
    require(rows_used % 2 == 0, || format!("αn = {rows_used} must be even"))?;
    let weight: usize = b.iter().map(|&x| x as usize).sum();
    require(weight * 2 == rows_used, || format!("‖b‖₁ = {weight} but αn/2 = {}", rows_used / 2))?;
    require(sigma > 0.0, || "σ must be positive".into())?;

    let (a, nf) = (alpha as f64, n as f64);
    let denom = (a * a * nf - a) / 2.0;
    let scale = a * sigma * (nf / denom).sqrt();
    let rows: Vec<Vec<f64>> = (0..rows_used).map(|i| h[i].iter().map(|v| scale * b[i] as f64 * v).collect()).collect();
    let rv = RandomVariable::uniform(rows)?;
    let coef = sigma / (nf * denom).sqrt();
    let designed_mean = (0..d).map(|j| coef * (0..rows_used).map(|i| h[i][j] * b[i] as f64).sum::<f64>()).collect();
    Ok(HardInstance {
        family: "low".into(),
        params: serde_json::json!({ "n": n, "d": d, "sigma": sigma, "alpha": alpha, "b": b }),
        rv: Some(rv),
        designed_mean,
        designed_cov_trace: Some(sigma * sigma),
    })
}

/// `b̃ = (√(n(α²n−α)/2)/σ)·H·μ`, which equals `b` for the exact mean.
pub fn recover_low_precision_bits(mean: &[f64], n: usize, sigma: f64, alpha: usize) -> Result<Vec<f64>, HardnessError> {
    let d = mean.len();
    let h = hadamard(d)?;
    let (a, nf) = (alpha as f64, n as f64);
    let coef = (nf * (a * a * nf - a) / 2.0).sqrt() / sigma;
    Ok((0..alpha * n).map(|i| coef * h[i].iter().zip(mean).map(|(x, y)| x * y).sum::<f64>()).collect())
}

/// Normalizer `N` in `X(i,j) = (ασn/N)(−1)^{1+A_ij} e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighPrecisionNorm {
    /// `N² = (αn)² − 2d²`, as written in the definition of the variable.
    Definition,
    /// `N² = (αn)² − d²`, as used in the moment computation.
    ProofMean,
    /// `N² = (αn)² − 2d`, the value for which `Tr Σ = σ²` holds.
    #[default]
    Exact,
}

impl HighPrecisionNorm {
    pub fn squared(&self, alpha_n: f64, d: f64) -> f64 {
        match self {
            HighPrecisionNorm::Definition => alpha_n * alpha_n - 2.0 * d * d,
            HighPrecisionNorm::ProofMean => alpha_n * alpha_n - d * d,
            HighPrecisionNorm::Exact => alpha_n * alpha_n - 2.0 * d,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HighPrecisionNorm::Definition => "definition",
            HighPrecisionNorm::ProofMean => "proof_mean",
            HighPrecisionNorm::Exact => "exact",
        }
    }
}

/// `X(i,j) = (ασn/N)(−1)^{1+A_ij} e_i` on `Ω = [d]×[αn/d]` uniform.
///
/// Rows of weight `M/2` average to zero and rows of weight `M/2 + 1` to
/// `2/M`, so `E X = (2σ/N)·b` when the column count `M = αn/d` is even.
/// The designed trace is `σ²((αn)² − 2d)/N²`, which is `σ²` only for
/// [`HighPrecisionNorm::Exact`].
pub fn hard_rv_high_precision(
    n: usize,
    d: usize,
    sigma: f64,
    inst: &SearchParityInstance,
    alpha: usize,
    norm: HighPrecisionNorm,
) -> Result<HardInstance, HardnessError> {
    let alpha_n = alpha * n;
    require(d >= 2 && d % 2 == 0, || format!("d = {d} must be even"))?;
    require(alpha_n % d == 0, || format!("αn = {alpha_n} must be a multiple of d = {d}"))?;
    let m_cols = alpha_n / d;
    require(m_cols % 2 == 0, || format!("αn/d = {m_cols} must be even"))?;
    require(inst.n_rows == d && inst.m_cols == m_cols, || {
        format!("instance is {}×{} but d×(αn/d) = {d}×{m_cols}", inst.n_rows, inst.m_cols)
    })?;
    require(sigma > 0.0, || "σ must be positive".into())?;
    let (anf, df) = (alpha_n as f64, d as f64);
    let n2 = norm.squared(anf, df);
    require(n2 > 0.0, || format!("normalizer N² = {n2} must be positive"))?;
    let nrm = n2.sqrt();
    let scale = anf * sigma / nrm;
    let mut rows = Vec::with_capacity(alpha_n);
    let mut labels = Vec::with_capacity(alpha_n);
    for i in 0..d {
        for j in 0..m_cols {
            let mut x = vec![0.0; d];
            x[i] = if inst.a[i][j] == 1 { scale } else { -scale };
            rows.push(x);
            labels.push(format!("{i},{j}"));
        }
    }
    let rv = RandomVariable::new(labels, vec![1.0 / anf; alpha_n], rows)?;
    let designed_mean = inst.b.iter().map(|&bi| 2.0 * sigma / nrm * bi as f64).collect();
    Ok(HardInstance {
        family: "high".into(),
        params: serde_json::json!({ "n": n, "d": d, "sigma": sigma, "alpha": alpha, "norm": norm.as_str() }),
        rv: Some(rv),
        designed_mean,
        designed_cov_trace: Some(sigma * sigma * (anf * anf - 2.0 * df) / n2),
    })
}

/// Thresholds the mean at half its nonzero level to recover `b^(A)`.
pub fn recover_parity_bits(mean: &[f64]) -> Vec<u8> {
    let top = mean.iter().cloned().fold(0.0, f64::max);
    mean.iter().map(|&v| (v > top / 2.0) as u8).collect()
}

/// Phase-model family on `Ω = [d′]×{0,1}` with
/// `P(j,x) = cos²(π/4 + (−1)^x ε′b_j/2)/d′`, `ε′ = arcsin(d′/n)`, and
/// `X(j,x) = x·(√d′/4)·H e_j`, so every coordinate is `0` or `±1/4`.
///
/// The probabilities are evaluated as `(1 − (−1)^x sin(ε′b_j))/(2d′)`, the
/// same quantity, which is exact at `b_j = 0`.
///
/// Designed mean: `(1/8)e₁ + (√d′/(8n))·H b`.
pub fn fractional_phase_rv(d_prime: usize, n: usize, b: &[u8]) -> Result<HardInstance, HardnessError> {
    let h = hadamard(d_prime)?;
    require(d_prime <= n, || format!("d′ = {d_prime} exceeds n = {n}"))?;
    require(b.len() == d_prime, || format!("b has length {} but d′ = {d_prime}", b.len()))?;
    let df = d_prime as f64;
    let sin_eps = (df / n as f64).asin().sin();
    let mut labels = Vec::with_capacity(2 * d_prime);
    let mut prob = Vec::with_capacity(2 * d_prime);
    let mut rows = Vec::with_capacity(2 * d_prime);
    for j in 0..d_prime {
        for x in 0..2u8 {
            let shift = if b[j] == 0 { 0.0 } else if x == 0 { -sin_eps } else { sin_eps };
            prob.push((1.0 + shift) / (2.0 * df));
            rows.push((0..d_prime).map(|i| if x == 0 { 0.0 } else { h[i][j].signum() * 0.25 }).collect());
            labels.push(format!("{j},{x}"));
        }
    }
    let rv = RandomVariable::new(labels, prob, rows)?;
    let root = df.sqrt();
    let designed_mean = (0..d_prime)
        .map(|i| {
            let base = if i == 0 { 0.125 } else { 0.0 };
            base + root / (8.0 * n as f64) * (0..d_prime).map(|j| h[i][j] * b[j] as f64).sum::<f64>()
        })
        .collect();
    Ok(HardInstance {
        family: "fracphase".into(),
        params: serde_json::json!({ "d_prime": d_prime, "n": n, "b": b }),
        rv: Some(rv),
        designed_mean,
        designed_cov_trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn search_parity_small_and_random() {
        let mut rng = SimRng::seed_from_u64(0);
        let inst = search_parity_instance(2, 2, &mut rng).unwrap();
        let mut weights: Vec<usize> = inst.a.iter().map(|r| r.iter().map(|&x| x as usize).sum()).collect();
        weights.sort();
        assert_eq!(weights, vec![1, 2]);
        assert_eq!(inst.b.iter().filter(|&&x| x == 0).count(), 1);
        for _ in 0..100 {
            let n_rows = rng.gen_range(1..=64);
            let m_cols = rng.gen_range(1..=64);
            let inst = search_parity_instance(n_rows, m_cols, &mut rng).unwrap();
            assert_eq!(inst.parity_vector(), inst.b);
            let light = inst.a.iter().filter(|r| r.iter().map(|&x| x as usize).sum::<usize>() == m_cols / 2).count();
            assert_eq!(light, n_rows / 2);
        }
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(hadamard(1).unwrap(), vec![vec![1.0]]);
        let s = 0.5f64.sqrt();
        assert_eq!(hadamard(2).unwrap(), vec![vec![s, s], vec![s, -s]]);
        assert!(hadamard(6).is_err());
        for d in [4, 16, 64, 256] {
            let h = hadamard(d).unwrap();
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = (0..d).map(|k| h[k][i] * h[k][j]).sum();
                    assert!((dot - (i == j) as u8 as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn low_precision_moments_and_recovery() {
        let mut rng = SimRng::seed_from_u64(1);
        let (n, d, alpha, sigma) = (4, 16, 4, 1.5);
        let b = balanced_bits(alpha * n, alpha * n / 2, &mut rng);
        let inst = hard_rv_low_precision(n, d, sigma, &b, alpha).unwrap();
        let rv = inst.rv.as_ref().unwrap();
        let mom = rv.moments();
        assert!((mom.cov_trace - sigma * sigma).abs() < 1e-9);
        assert!(max_diff(&mom.mean, &inst.designed_mean) < 1e-9);
        let back = recover_low_precision_bits(&mom.mean, n, sigma, alpha).unwrap();
        let bf: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        assert!(max_diff(&back, &bf) < 1e-9);
        assert!(hard_rv_low_precision(n, d, sigma, &vec![0; alpha * n], alpha).is_err());
    }

    #[test]
    fn high_precision_normalizations() {
        let mut rng = SimRng::seed_from_u64(2);
        let (n, d, alpha, sigma) = (8, 4, 4, 0.7);
        let inst = search_parity_instance(d, alpha * n / d, &mut rng).unwrap();
        let exact = hard_rv_high_precision(n, d, sigma, &inst, alpha, HighPrecisionNorm::Exact).unwrap();
        let mom = exact.rv.as_ref().unwrap().moments();
        assert!((mom.cov_trace - sigma * sigma).abs() < 1e-9);
        assert!(max_diff(&mom.mean, &exact.designed_mean) < 1e-12);
        assert_eq!(recover_parity_bits(&mom.mean), inst.b);
        for norm in [HighPrecisionNorm::Definition, HighPrecisionNorm::ProofMean] {
            let other = hard_rv_high_precision(n, d, sigma, &inst, alpha, norm).unwrap();
            let m = other.rv.as_ref().unwrap().moments();
            assert!((m.cov_trace - other.designed_cov_trace.unwrap()).abs() < 1e-9);
            assert!((m.cov_trace - sigma * sigma).abs() > 1e-3);
        }
    }

    #[test]
    fn high_precision_minimal_instance() {
        let inst = SearchParityInstance { a: vec![vec![0, 1], vec![1, 1]], b: vec![0, 1], n_rows: 2, m_cols: 2 };
        for norm in [HighPrecisionNorm::Exact, HighPrecisionNorm::ProofMean] {
            let hi = hard_rv_high_precision(1, 2, 1.0, &inst, 4, norm).unwrap();
            let mom = hi.rv.as_ref().unwrap().moments();
            // with d = 2 the two normalizations coincide: 16 − 4 = 16 − 2·2
            assert!((mom.cov_trace - 1.0).abs() < 1e-12);
            assert!((mom.mean[1] - 2.0 / 12f64.sqrt()).abs() < 1e-12);
            assert_eq!(mom.mean[0], 0.0);
            assert_eq!(recover_parity_bits(&mom.mean), vec![0, 1]);
        }
    }

    #[test]
    fn fractional_phase_family() {
        let zero = fractional_phase_rv(8, 16, &[0; 8]).unwrap();
        let mean = zero.rv.as_ref().unwrap().mean();
        let mut e1 = vec![0.0; 8];
        e1[0] = 0.125;
        assert_eq!(mean, e1);
        let b = [1, 0, 1, 1];
        let inst = fractional_phase_rv(4, 8, &b).unwrap();
        let rv = inst.rv.as_ref().unwrap();
        // brute-force sum over the eight outcomes
        let mut brute = vec![0.0; 4];
        for (p, x) in rv.outcomes() {
            for (acc, v) in brute.iter_mut().zip(x) {
                *acc += p * v;
            }
        }
        assert!(max_diff(&brute, &inst.designed_mean) < 1e-12);
        assert!(rv.max_abs_entry() <= 0.25);
        let eps = 0.5f64.asin();
        for (k, &p) in rv.probs().iter().enumerate() {
            let (j, x) = (k / 2, k % 2);
            let sign = if x == 0 { 1.0 } else { -1.0 };
            let cos2 = (std::f64::consts::FRAC_PI_4 + sign * eps * b[j] as f64 / 2.0).cos().powi(2) / 4.0;
            assert!((p - cos2).abs() < 1e-15);
        }
        let mut rng = SimRng::seed_from_u64(3);
        for _ in 0..100 {
            let bits: Vec<u8> = (0..16).map(|_| rng.gen_range(0..2)).collect();
            let inst = fractional_phase_rv(16, 40, &bits).unwrap();
            let total: f64 = inst.rv.as_ref().unwrap().probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(fractional_phase_rv(8, 4, &[0; 8]).is_err());
    }
}
