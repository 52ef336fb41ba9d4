//! Self-check suite behind `qmeanlab check`: reduced-size versions of the
//! acceptance properties, a few seconds in total.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::battery::{battery, phase_battery, BatteryKind};
use super::{fit_loglog, median, regime_classify, run_trials, Regime, TrialSpec};
use crate::estimators::quantum::near_optimal_traced;
use crate::estimators::{log_factor, EstimatorId, Settings};
use crate::gridqft::{dense_axis_matrix, dense_transform, GridSpec, GridState, MeasurementDistribution};
use crate::hardness::{
    balanced_bits, fractional_phase_rv, hard_rv_high_precision, hard_rv_low_precision, search_parity_instance,
    HighPrecisionNorm,
};
use crate::oracles::{directional_phases_binary, rv_tail_fraction, vector_tail_fraction, CostLedger, CostModel, QuantileMode};
use crate::probspace::{norm2, RandomVariable};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> CheckResult {
    result(name, false, format!("error: {err}"))
}

macro_rules! attempt {
    ($name:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return failed($name, err),
        }
    };
}

/// Runs every check in order.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        phase_concentration(),
        tail_lemma(),
        bounded_failure_rate(),
        near_optimal_structure(),
        scaling_separation(),
        phase_dispatch(),
        hard_moments(),
        determinism(),
        qft_numerics(),
    ]
}

fn phase_concentration() -> CheckResult {
    const NAME: &str = "phase_concentration";
    let mut worst = f64::INFINITY;
    for m in [16usize, 64] {
        for mu in [-0.7, -0.3, 0.2, 0.55, 0.9] {
            let rv = attempt!(NAME, RandomVariable::point_mass(vec![mu]));
            let mut ledger = CostLedger::default();
            let alpha = 0.5;
            let theta = attempt!(NAME, directional_phases_binary(&rv, mu.abs(), m, alpha, 0.04, &CostModel::default(), &mut ledger));
            let spec = attempt!(NAME, GridSpec::new(m, 1));
            let out = attempt!(NAME, GridState::uniform_superposition(spec).apply_phase_function(&theta)).inverse_qft();
            let probs = match attempt!(NAME, out.measurement_distribution()) {
                MeasurementDistribution::Joint(p) => p,
                MeasurementDistribution::Marginals(mut p) => p.remove(0),
            };
            let target = alpha * mu / (2.0 * PI);
            let mass: f64 = (0..m)
                .filter(|&b| (spec.axis_point(b) - target).abs() <= 4.0 / m as f64)
                .map(|b| probs[b])
                .sum();
            worst = worst.min(mass);
        }
    }
    result(NAME, worst >= 5.0 / 6.0 - 1e-9, format!("min mass near αμ/2π: {worst:.4}"))
}

fn tail_lemma() -> CheckResult {
    const NAME: &str = "tail_lemma";
    let mut rng = SimRng::seed_from_u64(2);
    let spec = attempt!(NAME, GridSpec::new(16, 3));
    let alpha: f64 = 1.0;
    let mut violations = 0;
    for _ in 0..10 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        violations += (attempt!(NAME, vector_tail_fraction(&spec, &x, alpha, 1 << 16)) > 2.0 * (-2.0 / (alpha * alpha)).exp()) as usize;
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let rv = attempt!(NAME, RandomVariable::uniform(rows));
        violations += (attempt!(NAME, rv_tail_fraction(&spec, &rv, alpha, 1 << 16)) > alpha / 2.0) as usize;
    }
    result(NAME, violations == 0, format!("{violations} violations in 20 enumerations"))
}

fn bounded_failure_rate() -> CheckResult {
    const NAME: &str = "bounded_failure_rate";
    let trials = 50;
    let limit = 0.1 + 3.0 * (0.1 / trials as f64).sqrt();
    let mut worst: f64 = 0.0;
    for kind in BatteryKind::ALL {
        let rv = attempt!(NAME, battery(kind, 2, 31));
        let batch = run_trials(&TrialSpec::new(EstimatorId::Bounded, 32.0, None, 0.1), &rv, trials, 100);
        worst = worst.max(batch.row.fail_rate);
    }
    result(NAME, worst <= limit, format!("worst fail rate {worst:.3} (limit {limit:.3})"))
}

fn near_optimal_structure() -> CheckResult {
    const NAME: &str = "near_optimal_structure";
    let settings = Settings { quantile_mode: QuantileMode::Exact, ..Settings::default() };
    let rv = attempt!(NAME, battery(BatteryKind::HeavyLight, 3, 41));
    let mut rng = SimRng::seed_from_u64(4);
    let (_, tr) = attempt!(NAME, near_optimal_traced(&rv, 64.0, 0.1, &settings, &mut rng));
    let e2 = tr.exp_norm_sq.sqrt();
    let quantiles_ok = tr.a.iter().enumerate().all(|(j, &a)| a <= 2f64.powf(j as f64 / 2.0) * e2 * (1.0 + 1e-9));
    let slices_ok = tr.slice_exp_norm.iter().enumerate().all(|(j, &en)| en < 2f64.powi(1 - j as i32) + 1e-9);
    let tail_ok = tr.tail_mean.iter().all(|v| v.abs() <= e2 / 2f64.powf(tr.k as f64 / 2.0) + 1e-9);
    let mut recon = tr.eta.clone();
    for (a, mean) in tr.a.iter().zip(&tr.slice_means) {
        for (r, v) in recon.iter_mut().zip(mean) {
            *r += a * v;
        }
    }
    for (r, v) in recon.iter_mut().zip(&tr.tail_mean) {
        *r += v;
    }
    let gap = recon.iter().zip(rv.mean()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    result(
        NAME,
        quantiles_ok && slices_ok && tail_ok && gap <= 1e-10,
        format!("quantiles {quantiles_ok}, slices {slices_ok}, tail {tail_ok}, telescoping gap {gap:.1e}"),
    )
}

fn scaling_separation() -> CheckResult {
    const NAME: &str = "scaling_separation";
    let rv = attempt!(NAME, battery(BatteryKind::UnitBall, 2, 5));
    let ns: Vec<f64> = (6..=10).map(|k| 2f64.powi(k)).collect();
    let mut q = Vec::new();
    let mut c = Vec::new();
    for &n in &ns {
        let qb = run_trials(&TrialSpec::new(EstimatorId::Bounded, n, None, 0.1), &rv, 60, 500);
        let cb = run_trials(&TrialSpec::new(EstimatorId::Classical, n, None, 0.1), &rv, 60, 500);
        q.push(qb.row.median_err_inf);
        c.push(cb.row.median_err_inf);
    }
    let qf = attempt!(NAME, fit_loglog(&ns, &q));
    let cf = attempt!(NAME, fit_loglog(&ns, &c));
    result(
        NAME,
        qf.slope <= -0.85 && (-0.65..=-0.35).contains(&cf.slope),
        format!("bounded slope {:.3}, classical slope {:.3}", qf.slope, cf.slope),
    )
}

fn phase_dispatch() -> CheckResult {
    const NAME: &str = "phase_dispatch";
    let d = 16;
    let df = d as f64;
    let lg = log_factor(d, 0.1);
    let rv = attempt!(NAME, phase_battery(d, 8, 6));
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for (n, np) in [(4.0, 256.0), (10.0, 8.0), (10.0, 4096.0), (10.0, 32.0), (64.0, 32.0), (64.0, 4096.0)] {
        let batch = run_trials(&TrialSpec::new(EstimatorId::PhaseDispatch, n, Some(np), 0.1), &rv, 30, 600);
        let (branch, bound) = match regime_classify(n, np, d, 0.1) {
            Regime::Trivial => ("trivial", 1.0),
            _ if n >= df => ("high_precision", (df.sqrt() / n).max(df / np) * lg),
            _ => ("low_precision", (1.0 / n.sqrt()).max(df / np) * lg),
        };
        let mut errs: Vec<f64> = Vec::new();
        for r in &batch.reports {
            match r {
                Ok(rep) => {
                    mismatches += (rep.branch != branch) as usize;
                    errs.push(rep.err_inf);
                }
                Err(_) => mismatches += 1,
            }
        }
        worst = worst.max(median(&mut errs) / bound);
    }
    result(NAME, mismatches == 0 && worst <= 1.0, format!("{mismatches} dispatch mismatches, worst median/bound {worst:.3}"))
}

fn hard_moments() -> CheckResult {
    const NAME: &str = "hard_moments";
    let mut rng = SimRng::seed_from_u64(7);
    let mut gap: f64 = 0.0;
    for _ in 0..10 {
        let b = balanced_bits(16, 8, &mut rng);
        let inst = attempt!(NAME, hard_rv_low_precision(4, 32, 1.5, &b, 4));
        let rv = attempt!(NAME, inst.rv.ok_or("missing variable"));
        gap = gap.max((rv.moments().cov_trace - 2.25).abs());
        gap = gap.max(rv.mean().iter().zip(&inst.designed_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let sp = attempt!(NAME, search_parity_instance(8, 4, &mut rng));
        let inst = attempt!(NAME, hard_rv_high_precision(8, 8, 1.0, &sp, 4, HighPrecisionNorm::Exact));
        let rv = attempt!(NAME, inst.rv.ok_or("missing variable"));
        gap = gap.max((rv.moments().cov_trace - 1.0).abs());
        gap = gap.max(rv.mean().iter().zip(&inst.designed_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let frac = attempt!(NAME, fractional_phase_rv(8, 32, &[0; 8]));
    let mean = attempt!(NAME, frac.rv.ok_or("missing variable")).mean();
    let e1 = mean[0] == 0.125 && mean[1..].iter().all(|&v| v == 0.0);
    result(NAME, gap <= 1e-9 && e1, format!("moment gap {gap:.1e}, fracphase b=0 mean is e₁/8: {e1}"))
}

fn determinism() -> CheckResult {
    const NAME: &str = "determinism";
    let rv = attempt!(NAME, battery(BatteryKind::HeavyLight, 2, 9));
    let spec = TrialSpec::new(EstimatorId::NearOptimal, 32.0, None, 0.1);
    let a = run_trials(&spec, &rv, 4, 900);
    let b = run_trials(&spec, &rv, 4, 900);
    let same = a.reports == b.reports && a.row == b.row;
    result(NAME, same, format!("identical reruns: {same}"))
}

fn qft_numerics() -> CheckResult {
    const NAME: &str = "qft_numerics";
    let mut unitarity: f64 = 0.0;
    for m in [8usize, 64] {
        let q = dense_axis_matrix(m);
        for i in 0..m {
            for j in 0..m {
                let s: num_complex::Complex64 = (0..m).map(|r| q[r][i].conj() * q[r][j]).sum();
                unitarity = unitarity.max((s - if i == j { 1.0 } else { 0.0 }).norm());
            }
        }
    }
    let spec = attempt!(NAME, GridSpec::new(8, 3));
    let mut rng = SimRng::seed_from_u64(10);
    let amps: Vec<num_complex::Complex64> =
        (0..512).map(|_| num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let nrm = norm2(&amps.iter().map(|a| a.norm()).collect::<Vec<_>>());
    let amps: Vec<_> = amps.iter().map(|a| a / nrm).collect();
    let state = attempt!(NAME, GridState::from_amplitudes(spec, amps.clone()));
    let fwd = attempt!(NAME, state.qft().amplitudes());
    let dense = dense_transform(&spec, &amps, false);
    let agree = fwd.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let back = attempt!(NAME, state.qft().inverse_qft().amplitudes());
    let trip = back.iter().zip(&amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let drift = (state.qft().norm() - 1.0).abs();
    result(
        NAME,
        unitarity <= 1e-10 && agree <= 1e-10 && trip <= 1e-10 && drift <= 1e-9,
        format!("unitarity {unitarity:.1e}, FFT vs dense {agree:.1e}, round trip {trip:.1e}, norm drift {drift:.1e}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for r in [phase_concentration(), tail_lemma(), hard_moments(), qft_numerics()] {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
