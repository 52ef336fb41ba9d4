//! Exact simulation of the grid register.
//!
//! The register lives on the centered lattice
//! `G = {j/m − 1/2 + 1/(2m) : j = 0..m}^d` and is acted on by phase functions
//! `|u⟩ ↦ e^{iθ_u}|u⟩` and by the Fourier transform
//! `QFT_G : |u⟩ ↦ m^{−d/2} Σ_v e^{2πi m⟨u,v⟩}|v⟩`.
//!
//! Two representations are kept:
//!
//! * a full amplitude vector of length `m^d` (row-major, axis 0 most
//!   significant), bounded by the lattice cap;
//! * a product form with one factor per axis. A factor is either a dense
//!   `m`-vector, a plane wave `e^{i m s u}/√m`, or the image of a plane wave
//!   under `QFT_G^{-1}`, whose amplitudes are the real Dirichlet kernel
//!   `D_m(s − 2πv) = sin(m x/2)/(m sin(x/2))`. The last two never need to be
//!   tabulated, which is what lets phase estimation run at `m` far beyond any
//!   memory budget.
//!
//! The per-axis transform is computed as twiddle × radix-2 DFT × twiddle,
//! using `m u v = (2a+1−m)(2b+1−m)/(4m)`. A dense reference evaluation of the
//! kernel is kept for cross-checking.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::oracles::{AxisDecomposition, PhaseFunction};

pub type C64 = Complex64;

/// Default bound on the number of amplitudes held in full-state mode.
pub const DEFAULT_LATTICE_CAP: usize = 1 << 22;
/// Environment variable overriding [`DEFAULT_LATTICE_CAP`].
pub const LATTICE_CAP_ENV: &str = "QMEANLAB_LATTICE_CAP";
/// Axis lengths are kept small enough that grid coordinates are exact in f64.
pub const MAX_AXIS_LEN: usize = 1 << 50;
/// Kernel marginals up to this length are tabulated in full for sampling.
const KERNEL_TABLE_MAX: usize = 1 << 16;
/// Half-width of the exactly tabulated window around a kernel peak.
const KERNEL_WINDOW_HALF: usize = 1 << 15;
/// Norm tolerance for user supplied states.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("points per axis must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("grid needs at least one axis")]
    ZeroDimension,
    #[error("axis length {0} exceeds the supported maximum 2^50")]
    AxisTooLarge(usize),
    #[error("lattice cap exceeded: m^d = {m}^{d} = {size:e} amplitudes, cap {cap}")]
    LatticeCap { m: usize, d: usize, size: f64, cap: usize },
    #[error("dimension mismatch: grid has d = {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("amplitude vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("state has norm {0}, expected 1")]
    NotNormalized(f64),
}

/// Shape of the grid: `m` points on each of `d` axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    m: usize,
    d: usize,
}

impl GridSpec {
    pub fn new(m: usize, d: usize) -> Result<Self, GridError> {
        if !m.is_power_of_two() {
            return Err(GridError::NotPowerOfTwo(m));
        }
        if m > MAX_AXIS_LEN {
            return Err(GridError::AxisTooLarge(m));
        }
        if d == 0 {
            return Err(GridError::ZeroDimension);
        }
        Ok(Self { m, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `m^d`, or `None` on overflow.
    pub fn size(&self) -> Option<usize> {
        self.m.checked_pow(self.d as u32)
    }

    fn size_f64(&self) -> f64 {
        (self.m as f64).powi(self.d as i32)
    }

    /// Fails unless the full lattice fits under `cap`.
    pub fn check_cap(&self, cap: usize) -> Result<usize, GridError> {
        match self.size() {
            Some(n) if n <= cap => Ok(n),
            _ => Err(GridError::LatticeCap { m: self.m, d: self.d, size: self.size_f64(), cap }),
        }
    }

    /// Coordinate `j/m − 1/2 + 1/(2m)` of axis index `j`, computed exactly.
    #[inline]
    pub fn axis_point(&self, j: usize) -> f64 {
        (2.0 * j as f64 + 1.0 - self.m as f64) / (2.0 * self.m as f64)
    }

    /// The `m` axis coordinates in increasing order.
    pub fn axis_points(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.axis_point(j)).collect()
    }

    /// Nearest axis index of a coordinate.
    #[inline]
    pub fn axis_index(&self, x: f64) -> usize {
        let j = ((x + 0.5) * self.m as f64 - 0.5).round();
        j.clamp(0.0, (self.m - 1) as f64) as usize
    }

    /// Multi-index of a flat row-major index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.m;
            flat /= self.m;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.m + j)
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&j| self.axis_point(j)).collect()
    }

    /// Every point of `G` in row-major order.
    pub fn points(&self, cap: usize) -> Result<Vec<Vec<f64>>, GridError> {
        let n = self.check_cap(cap)?;
        let mut idx = vec![0; self.d];
        Ok((0..n)
            .map(|f| {
                self.unflatten(f, &mut idx);
                self.point(&idx)
            })
            .collect())
    }
}

/// Per-axis point list of the grid.
pub fn grid_points(spec: &GridSpec) -> Vec<f64> {
    spec.axis_points()
}

/// Lattice cap from `QMEANLAB_LATTICE_CAP`, or the default.
pub fn lattice_cap_from_env() -> usize {
    std::env::var(LATTICE_CAP_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_LATTICE_CAP)
}

/// One tensor factor of a product-form state.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisState {
    Dense(Vec<C64>),
    /// Amplitude `e^{i m s u}/√m` at coordinate `u`.
    PlaneWave(f64),
    /// Amplitude `D_m(s − 2πv)` at coordinate `v`; the inverse transform of
    /// `PlaneWave(s)`.
    Kernel(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Full(Vec<C64>),
    Product(Vec<AxisState>),
}

/// A pure state of the grid register.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    spec: GridSpec,
    cap: usize,
    repr: Repr,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Direction {
    Forward,
    Inverse,
}

/// `D_m(x)` at `x = s − 2π v_b`, evaluated so that it stays accurate for
/// axis lengths up to [`MAX_AXIS_LEN`].
fn kernel_amplitude(m: usize, s: f64, sin_cos_a: (f64, f64), b: usize) -> f64 {
    if m == 1 {
        return 1.0;
    }
    let mf = m as f64;
    let k = 2 * b as i64 + 1 - m as i64;
    let half = 0.5 * s - PI * (k as f64 / (2.0 * mf));
    let j = (half / PI).round();
    let t = half - j * PI;
    let mt = mf * t;
    if mt.abs() <= PI {
        let sign = if (j as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        if t == 0.0 {
            return sign;
        }
        return sign * mt.sin() / (mf * t.sin());
    }
    // sin(m·half) = sin(ms/2 − kπ/2) with k odd, reduced by quadrant so the
    // large argument ms/2 is only ever passed to sin/cos once.
    let (sin_a, cos_a) = sin_cos_a;
    let num = match k.rem_euclid(4) {
        0 => sin_a,
        1 => -cos_a,
        2 => -sin_a,
        _ => cos_a,
    };
    num / (mf * half.sin())
}

fn kernel_sin_cos(m: usize, s: f64) -> (f64, f64) {
    (0.5 * m as f64 * s).sin_cos()
}

fn kernel_table(m: usize, s: f64) -> Vec<C64> {
    let sc = kernel_sin_cos(m, s);
    (0..m).map(|b| C64::new(kernel_amplitude(m, s, sc, b), 0.0)).collect()
}

fn plane_wave_table(spec: &GridSpec, s: f64) -> Vec<C64> {
    let amp = 1.0 / (spec.m as f64).sqrt();
    let ms = spec.m as f64 * s;
    (0..spec.m).map(|a| C64::from_polar(amp, ms * spec.axis_point(a))).collect()
}

/// `e^{-iπ r/q}` for an integer numerator reduced modulo `2q`.
fn unit_phase(num: i128, q: i128, sign: f64) -> C64 {
    let r = num.rem_euclid(2 * q);
    C64::from_polar(1.0, sign * PI * r as f64 / q as f64)
}

/// Twiddle-DFT-twiddle evaluation of one axis of `QFT_G` or its inverse.
struct AxisTransform {
    m: usize,
    pre: Vec<C64>,
    post: Vec<C64>,
    fft: Arc<dyn Fft<f64>>,
}

impl AxisTransform {
    fn new(m: usize, dir: Direction) -> Self {
        let sign = match dir {
            Direction::Forward => 1.0,
            Direction::Inverse => -1.0,
        };
        let mi = m as i128;
        let scale = 1.0 / (m as f64).sqrt();
        let pre = (0..mi).map(|a| unit_phase(a * (1 - mi), mi, sign)).collect();
        let c = unit_phase((1 - mi) * (1 - mi), 2 * mi, sign);
        let post = (0..mi).map(|b| unit_phase(b * (1 - mi), mi, sign) * c * scale).collect();
        let mut planner = FftPlanner::new();
        let fft = match dir {
            Direction::Forward => planner.plan_fft_inverse(m),
            Direction::Inverse => planner.plan_fft_forward(m),
        };
        Self { m, pre, post, fft }
    }

    fn apply(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.m);
        for (x, t) in buf.iter_mut().zip(&self.pre) {
            *x *= t;
        }
        self.fft.process(buf);
        for (x, t) in buf.iter_mut().zip(&self.post) {
            *x *= t;
        }
    }
}

fn transform_full(spec: &GridSpec, amps: &mut [C64], dir: Direction) {
    let m = spec.m;
    if m == 1 {
        return;
    }
    let tr = AxisTransform::new(m, dir);
    for axis in 0..spec.d {
        let stride = m.pow((spec.d - 1 - axis) as u32);
        let block = stride * m;
        let lane = |chunk: &mut [C64], inner: usize, buf: &mut Vec<C64>| {
            buf.clear();
            buf.extend((0..m).map(|k| chunk[inner + k * stride]));
            tr.apply(buf);
            for (k, v) in buf.iter().enumerate() {
                chunk[inner + k * stride] = *v;
            }
        };
        if amps.len() / block >= 8 {
            amps.par_chunks_mut(block).for_each_init(Vec::new, |buf, chunk| {
                for inner in 0..stride {
                    lane(chunk, inner, buf);
                }
            });
        } else {
            let mut buf = Vec::with_capacity(m);
            for chunk in amps.chunks_mut(block) {
                for inner in 0..stride {
                    lane(chunk, inner, &mut buf);
                }
            }
        }
    }
}

fn transform_axis(spec: &GridSpec, axis: AxisState, dir: Direction) -> AxisState {
    match (axis, dir) {
        (AxisState::PlaneWave(s), Direction::Inverse) => AxisState::Kernel(s),
        (AxisState::Kernel(s), Direction::Inverse) => AxisState::PlaneWave(-s),
        (AxisState::PlaneWave(s), Direction::Forward) => AxisState::Kernel(-s),
        (AxisState::Kernel(s), Direction::Forward) => AxisState::PlaneWave(s),
        (AxisState::Dense(mut v), dir) => {
            if spec.m > 1 {
                AxisTransform::new(spec.m, dir).apply(&mut v);
            }
            AxisState::Dense(v)
        }
    }
}

impl GridState {
    /// `m^{−d/2} Σ_u |u⟩`, held in product form.
    pub fn uniform_superposition(spec: GridSpec) -> Self {
        Self { spec, cap: lattice_cap_from_env(), repr: Repr::Product(vec![AxisState::PlaneWave(0.0); spec.d]) }
    }

    /// Full-state vector, validated for length and norm.
    pub fn from_amplitudes(spec: GridSpec, amps: Vec<C64>) -> Result<Self, GridError> {
        let n = spec.check_cap(usize::MAX)?;
        if amps.len() != n {
            return Err(GridError::LengthMismatch { expected: n, found: amps.len() });
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(GridError::NotNormalized(norm));
        }
        Ok(Self { spec, cap: lattice_cap_from_env().max(n), repr: Repr::Full(amps) })
    }

    /// Product state from one unit vector per axis.
    pub fn from_axes(spec: GridSpec, axes: Vec<Vec<C64>>) -> Result<Self, GridError> {
        if axes.len() != spec.d {
            return Err(GridError::DimensionMismatch { expected: spec.d, found: axes.len() });
        }
        let mut out = Vec::with_capacity(spec.d);
        for v in axes {
            if v.len() != spec.m {
                return Err(GridError::LengthMismatch { expected: spec.m, found: v.len() });
            }
            let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(GridError::NotNormalized(norm));
            }
            out.push(AxisState::Dense(v));
        }
        Ok(Self { spec, cap: lattice_cap_from_env(), repr: Repr::Product(out) })
    }

    /// Product state whose factors are given symbolically.
    pub fn from_axis_states(spec: GridSpec, axes: Vec<AxisState>) -> Result<Self, GridError> {
        if axes.len() != spec.d {
            return Err(GridError::DimensionMismatch { expected: spec.d, found: axes.len() });
        }
        Ok(Self { spec, cap: lattice_cap_from_env(), repr: Repr::Product(axes) })
    }

    /// The computational basis state at a multi-index.
    pub fn basis_state(spec: GridSpec, idx: &[usize]) -> Result<Self, GridError> {
        if idx.len() != spec.d {
            return Err(GridError::DimensionMismatch { expected: spec.d, found: idx.len() });
        }
        let axes = idx
            .iter()
            .map(|&j| {
                let mut v = vec![C64::new(0.0, 0.0); spec.m];
                v[j] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        Self::from_axes(spec, axes)
    }

    pub fn with_lattice_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn lattice_cap(&self) -> usize {
        self.cap
    }

    pub fn is_product(&self) -> bool {
        matches!(self.repr, Repr::Product(_))
    }

    /// Axis factors of a product-form state.
    pub fn axes(&self) -> Option<&[AxisState]> {
        match &self.repr {
            Repr::Product(a) => Some(a),
            Repr::Full(_) => None,
        }
    }

    fn axis_dense(&self, axis: &AxisState) -> Result<Vec<C64>, GridError> {
        if self.spec.m > self.cap {
            return Err(GridError::LatticeCap { m: self.spec.m, d: 1, size: self.spec.m as f64, cap: self.cap });
        }
        Ok(match axis {
            AxisState::Dense(v) => v.clone(),
            AxisState::PlaneWave(s) => plane_wave_table(&self.spec, *s),
            AxisState::Kernel(s) => kernel_table(self.spec.m, *s),
        })
    }

    /// The full amplitude vector (row-major), subject to the lattice cap.
    pub fn amplitudes(&self) -> Result<Vec<C64>, GridError> {
        match &self.repr {
            Repr::Full(v) => Ok(v.clone()),
            Repr::Product(axes) => {
                self.spec.check_cap(self.cap)?;
                let mut out = vec![C64::new(1.0, 0.0)];
                for axis in axes {
                    let v = self.axis_dense(axis)?;
                    out = out.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
                }
                Ok(out)
            }
        }
    }

    /// Switches to full-state representation.
    pub fn materialize(&self) -> Result<GridState, GridError> {
        Ok(Self { spec: self.spec, cap: self.cap, repr: Repr::Full(self.amplitudes()?) })
    }

    /// `‖ψ‖₂`. Symbolic factors have unit norm by construction.
    pub fn norm(&self) -> f64 {
        let sq = |v: &[C64]| v.iter().map(|a| a.norm_sqr()).sum::<f64>();
        match &self.repr {
            Repr::Full(v) => sq(v).sqrt(),
            Repr::Product(axes) => axes
                .iter()
                .map(|a| match a {
                    AxisState::Dense(v) => sq(v).sqrt(),
                    _ => 1.0,
                })
                .product(),
        }
    }

    /// Multiplies the amplitude at `u` by `e^{iθ_u}`.
    ///
    /// Separable phases keep a product-form state in product form; anything
    /// else materializes the full vector first.
    pub fn apply_phase_function(&self, theta: &PhaseFunction) -> Result<GridState, GridError> {
        if theta.dim() != self.spec.d {
            return Err(GridError::DimensionMismatch { expected: self.spec.d, found: theta.dim() });
        }
        let spec = self.spec;
        if let (Repr::Product(axes), Some(dec)) = (&self.repr, theta.axes()) {
            let mut out = Vec::with_capacity(spec.d);
            for (j, axis) in axes.iter().enumerate() {
                let next = match (dec, axis) {
                    (AxisDecomposition::Linear(w), AxisState::PlaneWave(s)) => {
                        AxisState::PlaneWave(s + w[j] / spec.m as f64)
                    }
                    (AxisDecomposition::Linear(w), _) => {
                        let mut v = self.axis_dense(axis)?;
                        for (a, x) in v.iter_mut().enumerate() {
                            *x *= C64::from_polar(1.0, w[j] * spec.axis_point(a));
                        }
                        AxisState::Dense(v)
                    }
                    (AxisDecomposition::PerAxis(fs), _) => {
                        let mut v = self.axis_dense(axis)?;
                        for (a, x) in v.iter_mut().enumerate() {
                            *x *= C64::from_polar(1.0, fs[j](spec.axis_point(a)));
                        }
                        AxisState::Dense(v)
                    }
                };
                out.push(next);
            }
            return Ok(Self { spec, cap: self.cap, repr: Repr::Product(out) });
        }
        let mut amps = match &self.repr {
            Repr::Full(v) => v.clone(),
            Repr::Product(_) => self.amplitudes()?,
        };
        let d = spec.d;
        amps.par_iter_mut().enumerate().for_each_init(
            || (vec![0usize; d], vec![0.0f64; d]),
            |(idx, u), (flat, x)| {
                spec.unflatten(flat, idx);
                for (c, &j) in u.iter_mut().zip(idx.iter()) {
                    *c = spec.axis_point(j);
                }
                *x *= C64::from_polar(1.0, theta.eval(u));
            },
        );
        Ok(Self { spec, cap: self.cap, repr: Repr::Full(amps) })
    }

    fn transform(&self, dir: Direction) -> GridState {
        let repr = match &self.repr {
            Repr::Product(axes) => {
                Repr::Product(axes.iter().cloned().map(|a| transform_axis(&self.spec, a, dir)).collect())
            }
            Repr::Full(v) => {
                let mut v = v.clone();
                transform_full(&self.spec, &mut v, dir);
                Repr::Full(v)
            }
        };
        Self { spec: self.spec, cap: self.cap, repr }
    }

    /// Applies `QFT_G`.
    pub fn qft(&self) -> GridState {
        self.transform(Direction::Forward)
    }

    /// Applies `QFT_G^{-1}`.
    pub fn inverse_qft(&self) -> GridState {
        self.transform(Direction::Inverse)
    }

    /// Born-rule probabilities: the joint table for full states, exact
    /// per-axis marginals for product states.
    pub fn measurement_distribution(&self) -> Result<MeasurementDistribution, GridError> {
        match &self.repr {
            Repr::Full(v) => Ok(MeasurementDistribution::Joint(v.iter().map(|a| a.norm_sqr()).collect())),
            Repr::Product(axes) => axes
                .iter()
                .map(|a| match a {
                    AxisState::PlaneWave(_) => Ok(vec![1.0 / self.spec.m as f64; self.spec.m]),
                    _ => Ok(self.axis_dense(a)?.iter().map(|x| x.norm_sqr()).collect()),
                })
                .collect::<Result<_, _>>()
                .map(MeasurementDistribution::Marginals),
        }
    }

    /// Precomputes what is needed to draw many measurement outcomes.
    pub fn sampler(&self) -> Result<GridSampler, GridError> {
        let kind = match &self.repr {
            Repr::Full(v) => SamplerKind::Joint(cumulative(v.iter().map(|a| a.norm_sqr()))),
            Repr::Product(axes) => SamplerKind::Axes(
                axes.iter()
                    .map(|a| match a {
                        AxisState::PlaneWave(_) => Ok(AxisSampler::Uniform),
                        AxisState::Kernel(s) if self.spec.m > KERNEL_TABLE_MAX => {
                            Ok(AxisSampler::Window(KernelWindow::new(self.spec.m, *s)))
                        }
                        _ => Ok(AxisSampler::Table(cumulative(self.axis_dense(a)?.iter().map(|x| x.norm_sqr())))),
                    })
                    .collect::<Result<_, GridError>>()?,
            ),
        };
        Ok(GridSampler { spec: self.spec, kind })
    }

    /// Draws one measurement outcome, returned as a grid point.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, GridError> {
        Ok(self.sampler()?.sample_point(rng))
    }

    /// One `(index tuple, re, im)` line per amplitude, 17 significant digits.
    pub fn dump(&self) -> Result<String, GridError> {
        let amps = self.amplitudes()?;
        let mut idx = vec![0; self.spec.d];
        let mut out = String::new();
        for (f, a) in amps.iter().enumerate() {
            self.spec.unflatten(f, &mut idx);
            let tuple: Vec<String> = idx.iter().map(usize::to_string).collect();
            out.push_str(&format!("({})\t{:.16e}\t{:.16e}\n", tuple.join(","), a.re, a.im));
        }
        Ok(out)
    }
}

/// Output of [`GridState::measurement_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementDistribution {
    Joint(Vec<f64>),
    Marginals(Vec<Vec<f64>>),
}

impl MeasurementDistribution {
    /// Probability of a multi-index.
    pub fn prob(&self, spec: &GridSpec, idx: &[usize]) -> f64 {
        match self {
            Self::Joint(p) => p[spec.flatten(idx)],
            Self::Marginals(ms) => ms.iter().zip(idx).map(|(m, &j)| m[j]).product(),
        }
    }

    /// The joint table, expanding marginals if necessary.
    pub fn joint(&self) -> Vec<f64> {
        match self {
            Self::Joint(p) => p.clone(),
            Self::Marginals(ms) => {
                let mut out = vec![1.0];
                for m in ms {
                    out = out.iter().flat_map(|a| m.iter().map(move |b| a * b)).collect();
                }
                out
            }
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            Self::Joint(p) => p.iter().sum(),
            Self::Marginals(ms) => ms.iter().map(|m| m.iter().sum::<f64>()).product(),
        }
    }
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

fn draw_from_cdf<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("nonempty table");
    let r = rng.gen::<f64>() * total;
    cdf.partition_point(|&c| c <= r).min(cdf.len() - 1)
}

/// Exact sampler for a Dirichlet-kernel marginal too long to tabulate: a
/// window around the peak is tabulated and the remaining mass is sampled by
/// rejection from a `1/(j² − 1/4)` proposal, which dominates the kernel
/// because `sin²(m x/2)/(m² sin²(x/2)) ≤ 1/(4t²)` at index distance `t`.
#[derive(Debug, Clone)]
pub struct KernelWindow {
    m: usize,
    s: f64,
    sin_cos: (f64, f64),
    center: usize,
    cdf: Vec<f64>,
}

impl KernelWindow {
    fn new(m: usize, s: f64) -> Self {
        let turns = s / (2.0 * PI);
        let v_star = turns - turns.round();
        let c = v_star * m as f64 + (m as f64 - 1.0) / 2.0;
        let center = (c.round() as i64).rem_euclid(m as i64) as usize;
        let sin_cos = kernel_sin_cos(m, s);
        let h = KERNEL_WINDOW_HALF as i64;
        let cdf = cumulative((-h..=h).map(|j| {
            let b = (center as i64 + j).rem_euclid(m as i64) as usize;
            kernel_amplitude(m, s, sin_cos, b).powi(2)
        }));
        Self { m, s, sin_cos, center, cdf }
    }

    fn prob(&self, b: usize) -> f64 {
        kernel_amplitude(self.m, self.s, self.sin_cos, b).powi(2)
    }

    fn index_at(&self, offset: i64) -> usize {
        (self.center as i64 + offset).rem_euclid(self.m as i64) as usize
    }

    /// Probability mass outside the tabulated window.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.cdf.last().copied().unwrap_or(0.0)).max(0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let window = *self.cdf.last().expect("window nonempty");
        let r = rng.gen::<f64>();
        if r < window {
            let k = self.cdf.partition_point(|&c| c <= r).min(self.cdf.len() - 1);
            return self.index_at(k as i64 - KERNEL_WINDOW_HALF as i64);
        }
        self.sample_tail(rng)
    }

    /// Draws from the kernel restricted to offsets beyond the window.
    fn sample_tail<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let h = KERNEL_WINDOW_HALF as f64 + 0.5;
        let half_m = (self.m / 2) as i64;
        loop {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let j = (h / u + 0.5).floor();
            let negative = rng.gen::<bool>();
            if j > half_m as f64 || (negative && j as i64 == half_m) {
                continue;
            }
            let j = j as i64;
            let b = self.index_at(if negative { -j } else { j });
            let jf = j as f64;
            if rng.gen::<f64>() < self.prob(b) * (jf * jf - 0.25) {
                return b;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum AxisSampler {
    Uniform,
    Table(Vec<f64>),
    Window(KernelWindow),
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Joint(Vec<f64>),
    Axes(Vec<AxisSampler>),
}

/// Reusable measurement sampler for one state.
#[derive(Debug, Clone)]
pub struct GridSampler {
    spec: GridSpec,
    kind: SamplerKind,
}

impl GridSampler {
    /// Draws a multi-index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.kind {
            SamplerKind::Joint(cdf) => {
                let mut idx = vec![0; self.spec.d];
                self.spec.unflatten(draw_from_cdf(cdf, rng), &mut idx);
                idx
            }
            SamplerKind::Axes(axes) => axes
                .iter()
                .map(|a| match a {
                    AxisSampler::Uniform => rng.gen_range(0..self.spec.m),
                    AxisSampler::Table(cdf) => draw_from_cdf(cdf, rng),
                    AxisSampler::Window(w) => w.sample(rng),
                })
                .collect(),
        }
    }

    /// Draws a grid point.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.spec.point(&self.sample_index(rng))
    }
}

/// Dense `m × m` matrix of one axis of `QFT_G`, entry `[v][u] = e^{2πi m u v}/√m`,
/// evaluated directly from the grid coordinates.
pub fn dense_axis_matrix(m: usize) -> Vec<Vec<C64>> {
    let spec = GridSpec { m, d: 1 };
    let scale = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|b| {
            let v = spec.axis_point(b);
            (0..m)
                .map(|a| C64::from_polar(scale, 2.0 * PI * m as f64 * spec.axis_point(a) * v))
                .collect()
        })
        .collect()
}

/// Reference `QFT_G` (or its inverse) by direct summation over the full
/// lattice, `O(m^{2d})`.
pub fn dense_transform(spec: &GridSpec, amps: &[C64], inverse: bool) -> Vec<C64> {
    let n = amps.len();
    let d = spec.d;
    let sign = if inverse { -1.0 } else { 1.0 };
    let scale = (spec.m as f64).powf(-(d as f64) / 2.0);
    let mf = spec.m as f64;
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|f| {
            let mut idx = vec![0; d];
            spec.unflatten(f, &mut idx);
            spec.point(&idx)
        })
        .collect();
    (0..n)
        .into_par_iter()
        .map(|vf| {
            let v = &coords[vf];
            let mut acc = C64::new(0.0, 0.0);
            for (uf, a) in amps.iter().enumerate() {
                let dot: f64 = coords[uf].iter().zip(v).map(|(x, y)| x * y).sum();
                acc += a * C64::from_polar(1.0, sign * 2.0 * PI * mf * dot);
            }
            acc * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(spec: GridSpec, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.size().unwrap();
        let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_point_examples() {
        assert_eq!(GridSpec::new(2, 1).unwrap().axis_points(), vec![-0.25, 0.25]);
        assert_eq!(GridSpec::new(4, 1).unwrap().axis_points(), vec![-0.375, -0.125, 0.125, 0.375]);
        let pts = GridSpec::new(2, 2).unwrap().points(16).unwrap();
        assert_eq!(pts, vec![vec![-0.25, -0.25], vec![-0.25, 0.25], vec![0.25, -0.25], vec![0.25, 0.25]]);
        assert!(GridSpec::new(3, 1).is_err());
        assert!(GridSpec::new(4, 0).is_err());
    }

    #[test]
    fn uniform_examples() {
        let s = GridState::uniform_superposition(GridSpec::new(2, 1).unwrap());
        let a = s.amplitudes().unwrap();
        for x in &a {
            assert!((x - C64::new(0.5f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        let s = GridState::uniform_superposition(GridSpec::new(4, 2).unwrap());
        assert!(s.is_product());
        for x in s.amplitudes().unwrap() {
            assert!((x - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
        assert_eq!(s.norm(), 1.0);
    }

    #[test]
    fn two_point_axis_matrix() {
        let q = dense_axis_matrix(2);
        let e = |t: f64| C64::from_polar(1.0 / 2f64.sqrt(), t);
        let expect = [[e(PI / 4.0), e(-PI / 4.0)], [e(-PI / 4.0), e(PI / 4.0)]];
        for b in 0..2 {
            for a in 0..2 {
                assert!((q[b][a] - expect[b][a]).norm() < 1e-15);
            }
        }
        let inner = |i: usize, j: usize| (0..2).map(|k| q[k][i].conj() * q[k][j]).sum::<C64>();
        assert!((inner(0, 0) - 1.0).norm() < 1e-15);
        assert!(inner(0, 1).norm() < 1e-15);
    }

    #[test]
    fn fft_matches_dense_and_inverts() {
        for (m, d) in [(2, 1), (4, 2), (8, 3), (32, 1), (32, 2), (16, 3)] {
            let spec = GridSpec::new(m, d).unwrap();
            let v = random_state(spec, (m * 31 + d) as u64);
            let st = GridState::from_amplitudes(spec, v.clone()).unwrap();
            let fwd = st.qft().amplitudes().unwrap();
            assert!(max_diff(&fwd, &dense_transform(&spec, &v, false)) < 1e-10, "forward m={m} d={d}");
            let inv = st.inverse_qft().amplitudes().unwrap();
            assert!(max_diff(&inv, &dense_transform(&spec, &v, true)) < 1e-10, "inverse m={m} d={d}");
            let back = st.qft().inverse_qft().amplitudes().unwrap();
            assert!(max_diff(&back, &v) < 1e-10);
        }
    }

    #[test]
    fn symbolic_axes_match_tables() {
        for m in [2usize, 8, 64, 4096] {
            let spec = GridSpec::new(m, 1).unwrap();
            for s in [0.0, 0.37, -1.9, 2.0 * PI / 3.0, 5.5] {
                let plane = GridState::from_axis_states(spec, vec![AxisState::PlaneWave(s)]).unwrap();
                let dense = plane.materialize().unwrap();
                for dir in [Direction::Forward, Direction::Inverse] {
                    let sym = plane.transform(dir).amplitudes().unwrap();
                    let num = dense.transform(dir).amplitudes().unwrap();
                    assert!(max_diff(&sym, &num) < 1e-10, "plane m={m} s={s} {dir:?}");
                    let sym2 = plane.transform(dir).transform(dir).amplitudes().unwrap();
                    let num2 = dense.transform(dir).transform(dir).amplitudes().unwrap();
                    assert!(max_diff(&sym2, &num2) < 1e-10, "kernel m={m} s={s} {dir:?}");
                }
            }
        }
    }

    #[test]
    fn phase_examples() {
        let spec = GridSpec::new(2, 1).unwrap();
        let u = GridState::uniform_superposition(spec);
        let same = u.apply_phase_function(&PhaseFunction::zero(1)).unwrap();
        assert_eq!(same.amplitudes().unwrap(), u.amplitudes().unwrap());
        let flip = PhaseFunction::general(1, "step", |x: &[f64]| if x[0] > 0.0 { PI } else { 0.0 });
        let a = u.apply_phase_function(&flip).unwrap().amplitudes().unwrap();
        let r = 0.5f64.sqrt();
        assert!((a[0] - C64::new(r, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(-r, 0.0)).norm() < 1e-15);
        let c = PhaseFunction::constant(1, 1.3);
        let before = u.measurement_distribution().unwrap().joint();
        let after = u.apply_phase_function(&c).unwrap().measurement_distribution().unwrap().joint();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn non_separable_phase_respects_cap() {
        let spec = GridSpec::new(16, 3).unwrap();
        let st = GridState::uniform_superposition(spec).with_lattice_cap(1000);
        let g = PhaseFunction::general(3, "product", |u: &[f64]| u[0] * u[1] * u[2]);
        assert!(matches!(st.apply_phase_function(&g), Err(GridError::LatticeCap { .. })));
        let st = st.with_lattice_cap(4096);
        let out = st.apply_phase_function(&g).unwrap();
        assert!(!out.is_product());
        assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_examples() {
        let spec = GridSpec::new(4, 2).unwrap();
        let u = GridState::uniform_superposition(spec).measurement_distribution().unwrap();
        assert!(u.joint().iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-15));
        let b = GridState::basis_state(spec, &[1, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            assert_eq!(b.measure(&mut rng).unwrap(), vec![-0.125, 0.375]);
        }
        let lin = PhaseFunction::linear(vec![7.0, -3.0]);
        let st = GridState::uniform_superposition(spec).apply_phase_function(&lin).unwrap().inverse_qft();
        let marg = st.measurement_distribution().unwrap();
        let full = st.materialize().unwrap().measurement_distribution().unwrap().joint();
        for (x, y) in marg.joint().iter().zip(&full) {
            assert!((x - y).abs() < 1e-12);
        }
        let s1 = st.measure(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let s2 = st.measure(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn empirical_frequencies_match() {
        let spec = GridSpec::new(8, 1).unwrap();
        let st = GridState::uniform_superposition(spec)
            .apply_phase_function(&PhaseFunction::linear(vec![8.0 * 1.1]))
            .unwrap()
            .inverse_qft();
        let p = st.measurement_distribution().unwrap().joint();
        let sampler = st.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut counts = vec![0usize; 8];
        for _ in 0..n {
            counts[sampler.sample_index(&mut rng)[0]] += 1;
        }
        for (c, &q) in counts.iter().zip(&p) {
            let sd = (n as f64 * q * (1.0 - q)).sqrt();
            assert!((*c as f64 - n as f64 * q).abs() <= 3.0 * sd + 1.0, "count {c} vs {q}");
        }
    }

    fn circular_offset(w: &KernelWindow, b: usize) -> i64 {
        let m = w.m as i64;
        let off = (b as i64 - w.center as i64).rem_euclid(m);
        off.min(m - off)
    }

    #[test]
    fn kernel_window_sampler_matches_closed_form() {
        let m = 1usize << 18;
        let s = 0.123_456_789;
        let w = KernelWindow::new(m, s);
        let h = KERNEL_WINDOW_HALF as i64;
        let exact_tail: f64 = (0..m).filter(|&b| circular_offset(&w, b) > h).map(|b| w.prob(b)).sum();
        assert!((w.tail_mass() - exact_tail).abs() < 1e-12);
        assert!(exact_tail > 0.0 && exact_tail < 1e-5);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let near = (0..n).filter(|_| circular_offset(&w, w.sample(&mut rng)) <= 1).count();
        let expect: f64 = (-1..=1).map(|j| w.prob(w.index_at(j))).sum();
        let sd = (n as f64 * expect * (1.0 - expect)).sqrt();
        assert!((near as f64 - n as f64 * expect).abs() <= 4.0 * sd);

        // Conditional tail law: mass of the band (h, 2h] among tail draws.
        let band: f64 = (0..m)
            .filter(|&b| (h + 1..=2 * h).contains(&circular_offset(&w, b)))
            .map(|b| w.prob(b))
            .sum::<f64>()
            / exact_tail;
        let n = 20_000;
        let mut in_band = 0;
        for _ in 0..n {
            let off = circular_offset(&w, w.sample_tail(&mut rng));
            assert!(off > h);
            if off <= 2 * h {
                in_band += 1;
            }
        }
        let sd = (n as f64 * band * (1.0 - band)).sqrt();
        assert!((in_band as f64 - n as f64 * band).abs() <= 4.0 * sd, "{in_band} vs {}", n as f64 * band);
    }

    #[test]
    fn kernel_peak_sits_at_phase_over_two_pi() {
        let m = 1usize << 20;
        let spec = GridSpec::new(m, 1).unwrap();
        let s = 1.7;
        let st = GridState::from_axis_states(spec, vec![AxisState::Kernel(s)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampler = st.sampler().unwrap();
        let mut close = 0;
        for _ in 0..1000 {
            let v = sampler.sample_point(&mut rng)[0];
            if (v - s / (2.0 * PI)).abs() <= 4.0 / m as f64 {
                close += 1;
            }
        }
        assert!(close > 900);
    }

    #[test]
    fn dump_has_seventeen_digits() {
        let st = GridState::uniform_superposition(GridSpec::new(2, 1).unwrap());
        let text = st.dump().unwrap();
        let first = text.lines().next().unwrap();
        let fields: Vec<&str> = first.split('\t').collect();
        assert_eq!(fields[0], "(0)");
        assert!(fields[1].starts_with("7.07106781186547"), "{first}");
        let mantissa = fields[1].split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        let back: f64 = fields[1].parse().unwrap();
        assert_eq!(back, st.amplitudes().unwrap()[0].re);
    }
}
