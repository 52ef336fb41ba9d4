//! Fixed test distributions with exact moments.

use rand::{Rng, SeedableRng};

use crate::probspace::{norm2, ProbError, RandomVariable};
use crate::SimRng;

/// Members of the standard battery for the binary-oracle estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryKind {
    /// Uniform over 16 random points of the unit ball.
    UnitBall,
    /// `e_i` with probability proportional to `i + 1`.
    Basis,
    /// A light point of norm 0.1 (probability 0.9) and a heavy point of norm 1.
    HeavyLight,
}

impl BatteryKind {
    pub const ALL: [BatteryKind; 3] = [BatteryKind::UnitBall, BatteryKind::Basis, BatteryKind::HeavyLight];

    pub fn as_str(&self) -> &'static str {
        match self {
            BatteryKind::UnitBall => "unit_ball",
            BatteryKind::Basis => "basis",
            BatteryKind::HeavyLight => "heavy_light",
        }
    }
}

fn ball_point<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm2(&x) <= 1.0 {
            return x;
        }
    }
}

fn unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let x = ball_point(d, rng);
        let r = norm2(&x);
        if r > 1e-3 {
            return x.iter().map(|v| v / r).collect();
        }
    }
}

/// A battery member in dimension `d`; `seed` fixes the random points.
pub fn battery(kind: BatteryKind, d: usize, seed: u64) -> Result<RandomVariable, ProbError> {
    let mut rng = SimRng::seed_from_u64(seed);
    match kind {
        BatteryKind::UnitBall => RandomVariable::uniform((0..16).map(|_| ball_point(d, &mut rng)).collect()),
        BatteryKind::Basis => {
            let total = (d * (d + 1) / 2) as f64;
            let prob = (0..d).map(|i| (i + 1) as f64 / total).collect();
            let rows = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect();
            RandomVariable::from_rows(prob, rows)
        }
        BatteryKind::HeavyLight => {
            let light: Vec<f64> = unit_vector(d, &mut rng).iter().map(|v| 0.1 * v).collect();
            let heavy = unit_vector(d, &mut rng);
            RandomVariable::from_rows(vec![0.9, 0.1], vec![light, heavy])
        }
    }
}

/// Uniform over `k` random points of `[−1/4, 1/4]^d`, for the phase-oracle
/// estimators.
pub fn phase_battery(d: usize, k: usize, seed: u64) -> Result<RandomVariable, ProbError> {
    let mut rng = SimRng::seed_from_u64(seed);
    RandomVariable::uniform((0..k).map(|_| (0..d).map(|_| rng.gen_range(-0.25..=0.25)).collect()).collect())
}
