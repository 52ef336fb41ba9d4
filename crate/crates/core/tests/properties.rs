use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;

use qmeanlab::estimators::classical::{median_of_means, SampleBatch};
use qmeanlab::estimators::{coordinate_median, log_factor};
use qmeanlab::gridqft::{GridSpec, GridState};
use qmeanlab::harness::{fit_loglog, regime_classify, Regime};
use qmeanlab::oracles::{quantile_oracle, CostLedger, CostModel, PhaseFunction, QuantileMode};
use qmeanlab::probspace::{clamp_vec, norm2};
use qmeanlab::{RandomVariable, SimRng};

fn rv_strategy(d: usize) -> impl Strategy<Value = RandomVariable> {
    prop::collection::vec((0.05f64..1.0, prop::collection::vec(-3.0f64..3.0, d)), 1..8).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.0).sum();
        let prob = pts.iter().map(|p| p.0 / total).collect();
        let rows = pts.into_iter().map(|p| p.1).collect();
        RandomVariable::from_rows(prob, rows).unwrap()
    })
}

proptest! {
    #[test]
    fn clamp_is_idempotent(x in prop::collection::vec(-2.0f64..2.0, 1..6), a in 0.0f64..1.0, w in 0.01f64..2.0) {
        let b = a + w;
        let once = clamp_vec(&x, a, b).unwrap();
        let twice = clamp_vec(&once, a, b).unwrap();
        let r = norm2(&once);
        prop_assert!(r == 0.0 || (a < r && r <= b));
        prop_assert!(once == x || once.iter().all(|&v| v == 0.0));
        prop_assert!(twice == once || once.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shells_telescope_to_the_mean(rv in rv_strategy(3), cuts in prop::collection::vec(0.01f64..4.0, 1..6)) {
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = rv.clamp_mean(0.0, cuts[0]).unwrap();
        for w in cuts.windows(2) {
            let s = rv.clamp_mean(w[0], w[1]).unwrap();
            total.iter_mut().zip(&s).for_each(|(t, v)| *t += v);
        }
        let tail = rv.clamp_mean(*cuts.last().unwrap(), f64::INFINITY).unwrap();
        total.iter_mut().zip(&tail).for_each(|(t, v)| *t += v);
        for (t, m) in total.iter().zip(rv.mean()) {
            prop_assert!((t - m).abs() <= 1e-12);
        }
    }

    #[test]
    fn coordinate_median_is_bracketed(vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..20)) {
        let med = coordinate_median(&vals).unwrap();
        for k in 0..2 {
            let below = vals.iter().filter(|v| v[k] <= med[k]).count();
            let above = vals.iter().filter(|v| v[k] >= med[k]).count();
            prop_assert!(2 * below >= vals.len());
            prop_assert!(2 * above >= vals.len());
        }
    }

    #[test]
    fn median_of_means_of_constant_draws(c in -3.0f64..3.0, count in 1usize..40, groups in 1usize..10) {
        let batch = SampleBatch { draws: vec![vec![c, -c]; count], seed: None, count };
        let est = median_of_means(&batch, groups.min(count)).unwrap();
        prop_assert!((est[0] - c).abs() <= 1e-12 && (est[1] + c).abs() <= 1e-12);
    }

    #[test]
    fn qft_round_trip_and_norm(seed in 0u64..1000, e in 1u32..5, d in 1usize..4) {
        use rand::Rng;
        let m = 1usize << e;
        let spec = GridSpec::new(m, d).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        let amps: Vec<C64> = (0..m.pow(d as u32)).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let nrm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let amps: Vec<C64> = amps.iter().map(|a| a / nrm).collect();
        let s = GridState::from_amplitudes(spec, amps.clone()).unwrap();
        let back = s.qft().inverse_qft().amplitudes().unwrap();
        for (a, b) in back.iter().zip(&amps) {
            prop_assert!((a - b).norm() <= 1e-10);
        }
        prop_assert!((s.qft().norm() - 1.0).abs() <= 1e-9);
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let phased = s.apply_phase_function(&PhaseFunction::linear(w)).unwrap();
        prop_assert!((phased.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn regime_trivial_iff_budget_short(n in 1.0f64..4096.0, np in 1.0f64..4096.0, e in 1u32..7, delta in 0.001f64..0.5) {
        let d = 1usize << e;
        let r = regime_classify(n, np, d, delta);
        let short = np < d as f64 || n < log_factor(d, delta);
        prop_assert_eq!(r == Regime::Trivial, short);
        if !short {
            prop_assert!(n >= d as f64 || r != Regime::ExperimentLimited);
            prop_assert!(n < d as f64 || r != Regime::SampleLimited);
        }
    }

    #[test]
    fn power_laws_fit_exactly(p in -2.0f64..2.0, c in 0.1f64..10.0) {
        let xs: Vec<f64> = (3..9).map(|k| 2f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        prop_assert!((fit.slope - p).abs() <= 1e-9);
    }

    #[test]
    fn simulated_quantile_within_band(rv in rv_strategy(1), p in 0.01f64..1.0, seed in 0u64..500) {
        let norms = rv.norm_rv();
        let mut rng = SimRng::seed_from_u64(seed);
        let mut ledger = CostLedger::default();
        let c = 0.25;
        let q = quantile_oracle(&norms, p, 1e-15, c, QuantileMode::Simulated, &mut rng, &CostModel::default(), &mut ledger).unwrap();
        prop_assert!(norms.exact_quantile(p).unwrap() <= q && q <= norms.exact_quantile(c * p).unwrap());
        prop_assert_eq!(ledger.quantile_calls, 1);
    }
}
