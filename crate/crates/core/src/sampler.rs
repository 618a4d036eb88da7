//! Generic random-scan Gibbs (GS), tempered Gibbs (TGS) and weighted tempered
//! Gibbs (wTGS) kernels over an abstract coordinate-wise target.
//!
//! A TGS iteration picks coordinate `i` with probability proportional to
//! `p_i(x) = eta_i(x_-i) * g(x_i | x_-i) / f(x_i | x_-i)`, redraws `x_i` from the
//! modified conditional `g`, and attaches the importance weight `1 / Z(x)` to
//! the *new* state, where `Z(x) = mean_i p_i(x)` (TGS) or `Z(x) ∝ sum_i p_i(x)`
//! (wTGS). The chain is reversible with respect to `f * Z`, so self-normalised
//! weighted averages converge to expectations under `f`.
//!
//! Everything is computed in log space. Selection probabilities are
//! exponentiated only after subtracting the per-sweep maximum.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used by every chain. Seeded per chain, with an optional stream
/// index so replicate chains draw from disjoint sequences.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A `d`-dimensional distribution described through its full conditionals
/// `f(x_i | x_-i)` and a family of modified conditionals `g(x_i | x_-i)`.
///
/// Implementations must be immutable once built; chains only take shared
/// references, so a single target can back many concurrent replicates.
pub trait Target {
    type Coord: Copy + PartialEq + fmt::Debug;

    fn dim(&self) -> usize;

    /// `log f(x_i | x_-i)` evaluated at the current value of `x_i`.
    fn log_conditional(&self, i: usize, x: &[Self::Coord]) -> f64;

    /// `log g(x_i | x_-i)` evaluated at the current value of `x_i`.
    fn log_modified(&self, i: usize, x: &[Self::Coord]) -> f64;

    /// Both log densities at once. Override when they share work.
    fn log_pair(&self, i: usize, x: &[Self::Coord]) -> (f64, f64) {
        (self.log_conditional(i, x), self.log_modified(i, x))
    }

    /// New value for `x_i` from a kernel that leaves `f(. | x_-i)` invariant.
    fn sample_conditional<R: Rng + ?Sized>(&self, i: usize, x: &[Self::Coord], rng: &mut R)
        -> Self::Coord;

    /// New value for `x_i` from a kernel that leaves `g(. | x_-i)` invariant.
    fn sample_modified<R: Rng + ?Sized>(&self, i: usize, x: &[Self::Coord], rng: &mut R)
        -> Self::Coord;

    /// `log eta_i(x_-i)` for weighted TGS. `None` means the target does not
    /// supply a weight function.
    fn log_eta(&self, _i: usize, _x: &[Self::Coord]) -> Option<f64> {
        None
    }

    /// `P(x_i = 1 | x_-i)` for every coordinate, when meaningful. Enables
    /// Rao-Blackwell accumulation in [`run_chain`].
    fn inclusion_probabilities(&self, _x: &[Self::Coord]) -> Option<Vec<f64>> {
        None
    }

    /// Starting point used when no initial state is supplied.
    fn default_state(&self) -> Vec<Self::Coord>;
}

/// Which coordinate-wise kernel to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kernel {
    #[serde(rename = "gs")]
    Gibbs,
    #[serde(rename = "tgs")]
    Tempered,
    #[serde(rename = "wtgs")]
    Weighted,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gibbs => "gs",
            Kernel::Tempered => "tgs",
            Kernel::Weighted => "wtgs",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gs" | "gibbs" => Ok(Kernel::Gibbs),
            "tgs" | "tempered" => Ok(Kernel::Tempered),
            "wtgs" | "weighted" => Ok(Kernel::Weighted),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Log selection probabilities at one state together with `log Z`.
#[derive(Clone, Debug)]
pub struct Selection {
    log_p: Vec<f64>,
    log_z: f64,
}

impl Selection {
    /// Builds a selection from per-coordinate `log p_i`. For TGS `Z` is the
    /// mean of the `p_i`; for wTGS it is their (unnormalised) sum.
    pub fn from_log_p(log_p: Vec<f64>, weighted: bool) -> Result<Self> {
        if log_p.is_empty() {
            return Err(Error::DegenerateSelection);
        }
        let log_sum = log_sum_exp(&log_p)?;
        let log_z = if weighted {
            log_sum
        } else {
            log_sum - (log_p.len() as f64).ln()
        };
        Ok(Self { log_p, log_z })
    }

    fn uniform(d: usize) -> Self {
        Self {
            log_p: vec![0.0; d],
            log_z: 0.0,
        }
    }

    pub fn log_probabilities(&self) -> &[f64] {
        &self.log_p
    }

    /// The raw `p_i(x)`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_p.iter().map(|l| l.exp()).collect()
    }

    /// `p_i / sum_j p_j`.
    pub fn normalized(&self) -> Vec<f64> {
        let max = max_finite(&self.log_p);
        let w: Vec<f64> = self.log_p.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    /// Log importance weight `-log Z` of the state this selection belongs to.
    pub fn log_weight(&self) -> f64 {
        -self.log_z
    }

    /// Index for a uniform draw `u` in `[0, 1)` by a single cumulative scan.
    pub fn draw(&self, u: f64) -> usize {
        draw_index(&self.log_p, u)
    }
}

/// Index `i` with probability `exp(log_p[i]) / sum_j exp(log_p[j])`, found
/// by scanning cumulative sums for the first one exceeding `u` times the total.
pub fn draw_index(log_p: &[f64], u: f64) -> usize {
    let max = max_finite(log_p);
    let total: f64 = log_p.iter().map(|l| (l - max).exp()).sum();
    let threshold = u * total;
    let mut cumulative = 0.0;
    for (i, l) in log_p.iter().enumerate() {
        cumulative += (l - max).exp();
        if threshold < cumulative {
            return i;
        }
    }
    last_positive(log_p)
}

fn last_positive(log_p: &[f64]) -> usize {
    log_p
        .iter()
        .rposition(|l| *l > f64::NEG_INFINITY)
        .unwrap_or(log_p.len() - 1)
}

fn max_finite(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log sum_i exp(values_i)`, rejecting NaN / `+inf` and the all-`-inf` case.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::DegenerateSelection);
    }
    let max = max_finite(values);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateSelection);
    }
    let total: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + total.ln())
}

/// Selection probabilities `p_i(x)` and `Z(x)` at state `x`.
///
/// With `weighted = false` the weight function is ignored (`eta = 1`) and `Z`
/// is the mean of the `p_i`. With `weighted = true` the target must supply
/// `eta`, and `Z` is returned as the unnormalised sum.
pub fn selection_probabilities<T: Target>(
    target: &T,
    x: &[T::Coord],
    weighted: bool,
) -> Result<Selection> {
    let d = target.dim();
    let mut log_p = Vec::with_capacity(d);
    for i in 0..d {
        let (log_f, log_g) = target.log_pair(i, x);
        if !log_f.is_finite() {
            return Err(Error::NonFiniteDensity { coordinate: i });
        }
        if log_g == f64::NEG_INFINITY {
            return Err(Error::AbsoluteContinuity { coordinate: i });
        }
        if !log_g.is_finite() {
            return Err(Error::NonFiniteDensity { coordinate: i });
        }
        let mut lp = log_g - log_f;
        if weighted {
            let log_eta = target.log_eta(i, x).ok_or_else(|| {
                Error::Config("weighted TGS needs a target with a weight function".into())
            })?;
            if log_eta.is_nan() || log_eta == f64::INFINITY {
                return Err(Error::NonFiniteDensity { coordinate: i });
            }
            lp += log_eta;
        }
        log_p.push(lp);
    }
    Selection::from_log_p(log_p, weighted)
}

/// One retained iteration: the state after the update, the coordinate that
/// was updated, and the log importance weight of the new state.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample<C> {
    pub state: Vec<C>,
    pub index: usize,
    pub log_weight: f64,
}

impl<C> WeightedSample<C> {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Running weighted sums `sum_t w_t v_t` kept on a floating log scale so that
/// weights spanning hundreds of orders of magnitude stay representable.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSums {
    log_scale: f64,
    total: f64,
    sums: Vec<f64>,
    count: usize,
}

impl WeightedSums {
    pub fn new(len: usize) -> Self {
        Self {
            log_scale: f64::NEG_INFINITY,
            total: 0.0,
            sums: vec![0.0; len],
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Rescales if needed and returns the linear weight relative to the scale.
    fn admit(&mut self, log_weight: f64) -> f64 {
        if log_weight > self.log_scale {
            if self.count > 0 {
                let factor = (self.log_scale - log_weight).exp();
                self.total *= factor;
                self.sums.iter_mut().for_each(|s| *s *= factor);
            }
            self.log_scale = log_weight;
        }
        self.count += 1;
        let w = (log_weight - self.log_scale).exp();
        self.total += w;
        w
    }

    /// Adds `w * values` for a full vector of values.
    pub fn add(&mut self, log_weight: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sums.len());
        let w = self.admit(log_weight);
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += w * v;
        }
    }

    /// Adds `w` to the sums at `indices` (indicator-valued functions).
    pub fn add_indicators(&mut self, log_weight: f64, indices: &[usize]) {
        let w = self.admit(log_weight);
        for &j in indices {
            self.sums[j] += w;
        }
    }

    /// `sum_t w_t v_t / sum_t w_t`, or `None` before the first sample.
    pub fn estimates(&self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        Some(self.sums.iter().map(|s| s / self.total).collect())
    }
}

/// Ordered retained samples of one chain plus optional Rao-Blackwell sums.
#[derive(Clone, Debug)]
pub struct WeightedTrace<C> {
    pub kernel: Kernel,
    pub samples: Vec<WeightedSample<C>>,
    pub burn_in: usize,
    /// `sum_t w_t P(x_i = 1 | x_-i^(t))`, filled when the target exposes
    /// inclusion probabilities.
    pub rb_accumulators: Option<WeightedSums>,
}

impl<C> WeightedTrace<C> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.log_weight).collect()
    }

    pub fn rao_blackwell(&self) -> Result<Vec<f64>> {
        self.rb_accumulators
            .as_ref()
            .and_then(WeightedSums::estimates)
            .ok_or(Error::MissingRaoBlackwell)
    }
}

/// A chain positioned at a state, caching the selection probabilities of
/// that state so every iteration evaluates the conditionals once.
pub struct Chain<'a, T: Target> {
    target: &'a T,
    kernel: Kernel,
    state: Vec<T::Coord>,
    selection: Selection,
}

impl<'a, T: Target> Chain<'a, T> {
    pub fn new(target: &'a T, kernel: Kernel, state: Vec<T::Coord>) -> Result<Self> {
        if state.len() != target.dim() {
            return Err(Error::Parameter(format!(
                "initial state has length {} but the target has dimension {}",
                state.len(),
                target.dim()
            )));
        }
        if target.dim() == 0 {
            return Err(Error::Parameter("target dimension must be positive".into()));
        }
        let selection = Self::select(target, kernel, &state)?;
        Ok(Self {
            target,
            kernel,
            state,
            selection,
        })
    }

    fn select(target: &T, kernel: Kernel, state: &[T::Coord]) -> Result<Selection> {
        match kernel {
            Kernel::Gibbs => Ok(Selection::uniform(target.dim())),
            Kernel::Tempered => selection_probabilities(target, state, false),
            Kernel::Weighted => selection_probabilities(target, state, true),
        }
    }

    pub fn state(&self) -> &[T::Coord] {
        &self.state
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// One iteration. Draw pattern: one uniform for the index, then the
    /// coordinate draw of the target.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<WeightedSample<T::Coord>> {
        let u: f64 = rng.random();
        let i = self.selection.draw(u);
        let value = match self.kernel {
            Kernel::Gibbs => self.target.sample_conditional(i, &self.state, rng),
            Kernel::Tempered | Kernel::Weighted => {
                self.target.sample_modified(i, &self.state, rng)
            }
        };
        self.state[i] = value;
        self.selection = Self::select(self.target, self.kernel, &self.state)?;
        Ok(WeightedSample {
            state: self.state.clone(),
            index: i,
            log_weight: self.selection.log_weight(),
        })
    }
}

/// One random-scan Gibbs iteration from `x`.
pub fn gs_step<T: Target, R: Rng + ?Sized>(
    target: &T,
    x: &[T::Coord],
    rng: &mut R,
) -> Result<WeightedSample<T::Coord>> {
    Chain::new(target, Kernel::Gibbs, x.to_vec())?.step(rng)
}

/// One TGS iteration from `x`; the weight is `Z(x_new)^-1`.
pub fn tgs_step<T: Target, R: Rng + ?Sized>(
    target: &T,
    x: &[T::Coord],
    rng: &mut R,
) -> Result<WeightedSample<T::Coord>> {
    Chain::new(target, Kernel::Tempered, x.to_vec())?.step(rng)
}

/// One wTGS iteration from `x`; the weight is `(sum_i p_i(x_new))^-1`.
pub fn wtgs_step<T: Target, R: Rng + ?Sized>(
    target: &T,
    x: &[T::Coord],
    rng: &mut R,
) -> Result<WeightedSample<T::Coord>> {
    Chain::new(target, Kernel::Weighted, x.to_vec())?.step(rng)
}

/// Length, burn-in and seed of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub n_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
}

impl RunOptions {
    /// Options with the default burn-in of 10% of the iterations.
    pub fn new(n_iters: usize, seed: u64) -> Self {
        Self {
            n_iters,
            burn_in: n_iters / 10,
            seed,
            stream: 0,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.n_iters, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Runs a chain and keeps every post-burn-in iteration.
///
/// GS traces carry unit weights. The result is a deterministic function of
/// the target, the options and the initial state.
pub fn run_chain<T: Target>(
    target: &T,
    kernel: Kernel,
    options: RunOptions,
    initial: Option<Vec<T::Coord>>,
) -> Result<WeightedTrace<T::Coord>> {
    options.validate()?;
    let mut rng = chain_rng(options.seed, options.stream);
    let start = initial.unwrap_or_else(|| target.default_state());
    let mut chain = Chain::new(target, kernel, start)?;
    let mut samples = Vec::with_capacity(options.n_iters - options.burn_in);
    let mut rb: Option<WeightedSums> = None;
    for t in 0..options.n_iters {
        let sample = chain.step(&mut rng)?;
        if t < options.burn_in {
            continue;
        }
        if let Some(cond) = target.inclusion_probabilities(&sample.state) {
            rb.get_or_insert_with(|| WeightedSums::new(cond.len()))
                .add(sample.log_weight, &cond);
        }
        samples.push(sample);
    }
    Ok(WeightedTrace {
        kernel,
        samples,
        burn_in: options.burn_in,
        rb_accumulators: rb,
    })
}

/// Self-normalised estimate `sum_t w_t h(x_t) / sum_t w_t`.
pub fn importance_estimate<C, H>(trace: &WeightedTrace<C>, h: H) -> Result<f64>
where
    H: Fn(&[C]) -> f64,
{
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let max = trace
        .samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, s) in trace.samples.iter().enumerate() {
        let v = h(&s.state);
        if !v.is_finite() {
            return Err(Error::NonFiniteFunction { index: t });
        }
        let w = (s.log_weight - max).exp();
        num += w * v;
        den += w;
    }
    Ok(num / den)
}

/// Normalised weight variance `(1/n) sum_t wbar_t^2 - 1` with
/// `wbar_t = w_t / mean(w)`.
pub fn weight_variance(log_weights: &[f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    let n = log_weights.len() as f64;
    Ok((n * s2 / (s1 * s1) - 1.0).max(0.0))
}
