//! State-distance budget of the perturbed oracle.

use qmeanlab::estimators::quantum::{BoundedPlan, BOUNDED_EPS};
use qmeanlab::gridqft::GridSpec;
use qmeanlab::harness::battery::{battery, BatteryKind};
use qmeanlab::oracles::{directional_phases_binary, perturb, phase_state_distance, CostLedger, CostModel, NoiseModel};

/// `‖ψ − ψ′‖` for Algorithm-1 grids with the given noise fraction.
fn distance(n: f64, eta_of_alpha: impl Fn(f64) -> f64, seed: u64) -> (f64, f64, f64) {
    let rv = battery(BatteryKind::UnitBall, 2, 3).unwrap();
    let l2 = rv.exp_norm2();
    let plan = BoundedPlan::new(2, l2, n, 0.1).unwrap();
    assert!(!plan.early_exit);
    let spec = GridSpec::new(plan.m, 2).unwrap();
    let mut ledger = CostLedger::default();
    let theta =
        directional_phases_binary(&rv, l2, plan.m, plan.alpha, BOUNDED_EPS, &CostModel::default(), &mut ledger).unwrap();
    let eta = eta_of_alpha(plan.alpha);
    let noise = NoiseModel::perturbed(BOUNDED_EPS, eta, seed).unwrap();
    let bent = perturb(&theta, &noise, &spec);
    (phase_state_distance(&theta, &bent, &spec, 1 << 22).unwrap(), eta, plan.alpha)
}

#[test]
fn perturbation_distance_budget() {
    for (i, n) in [16.0, 32.0, 64.0].into_iter().enumerate() {
        let (dist, eta, _) = distance(n, |a| a, 70 + i as u64);
        let eps2 = BOUNDED_EPS * BOUNDED_EPS;
        // at most η/2 of the points are bad, each contributing at most |e^{iδ}−1|² = 4
        assert!(dist * dist <= eps2 + 2.0 * eta, "n={n}: {} > {}", dist * dist, eps2 + 2.0 * eta);
        // bad phases are uniform, so on average |e^{iδ}−1|² = 2
        let expected = (1.0 - eta / 2.0) * eps2 + eta;
        assert!((dist * dist / expected - 1.0).abs() < 0.05, "n={n}: {} vs {expected}", dist * dist);
    }
}

#[test]
fn one_twelfth_needs_small_eta() {
    // With η equal to the estimator's α (≈ 0.25 at these sizes) the distance
    // is near 1/2; 1/12 is only reached once ε² + η ≤ 1/144.
    let (far, _, alpha) = distance(64.0, |a| a, 5);
    assert!(alpha > 0.2);
    assert!(far > 1.0 / 12.0);
    let (near, _, _) = distance(64.0, |_| 1.0 / 144.0 - BOUNDED_EPS * BOUNDED_EPS, 5);
    assert!(near <= 1.0 / 12.0, "{near}");
}
