//! Enumerable targets on `{0,1}^p` and explicit transition matrices of the
//! GS, TGS and wTGS kernels on them.
//!
//! States are indexed by their natural binary encoding: bit `i` of the index
//! is `x_i`, so the flip neighbour of state `s` in coordinate `i` is
//! `s ^ (1 << i)`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::sampler::{log_sum_exp, Kernel, Target};

pub const DEFAULT_MAX_STATES: usize = 1 << 20;

pub fn bit(state: usize, i: usize) -> u8 {
    ((state >> i) & 1) as u8
}

pub fn state_index(x: &[u8]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |s, (i, &v)| s | ((v as usize & 1) << i))
}

pub fn state_bits(state: usize, p: usize) -> Vec<u8> {
    (0..p).map(|i| bit(state, i)).collect()
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log sigmoid(x)` without cancellation.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// A distribution on `{0,1}^p` with computable unnormalised log mass.
pub trait Enumerable {
    fn num_coordinates(&self) -> usize;

    /// Unnormalised `log f(state)`; `-inf` for states outside the support.
    fn log_weight(&self, state: usize) -> f64;
}

/// Exact table of `f` over all `2^p` states.
pub fn enumerate_distribution<T: Enumerable + ?Sized>(
    target: &T,
    max_states: usize,
) -> Result<BinaryDistribution> {
    let p = target.num_coordinates();
    let required = if p < usize::BITS as usize { 1usize << p } else { usize::MAX };
    if p >= usize::BITS as usize || required > max_states {
        return Err(Error::StateSpaceTooLarge {
            p,
            limit: max_states,
            required,
        });
    }
    let log_w = (0..required).map(|s| target.log_weight(s)).collect();
    BinaryDistribution::from_log_weights(p, log_w)
}

/// Normalised probability table over `{0,1}^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDistribution {
    p: usize,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl BinaryDistribution {
    pub fn from_log_weights(p: usize, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != 1usize << p {
            return Err(Error::Parameter(format!(
                "expected {} log weights for p = {p}, got {}",
                1usize << p,
                log_weights.len()
            )));
        }
        let log_norm = log_sum_exp(&log_weights)
            .map_err(|_| Error::Parameter("table has no positive mass".into()))?;
        let log_probs: Vec<f64> = log_weights.iter().map(|l| l - log_norm).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Ok(Self { p, log_probs, probs })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn log_prob(&self, state: usize) -> f64 {
        self.log_probs[state]
    }

    /// `log f(x_i = 1 | x_-i) - log f(x_i = 0 | x_-i)` at `state`.
    pub fn conditional_logit(&self, i: usize, state: usize) -> f64 {
        let one = state | (1 << i);
        let zero = state & !(1 << i);
        self.log_probs[one] - self.log_probs[zero]
    }

    /// `f(x_i = 1 | x_-i)`.
    pub fn conditional_one(&self, i: usize, state: usize) -> f64 {
        sigmoid(self.conditional_logit(i, state))
    }

    /// Marginal inclusion probabilities `P(x_i = 1)`.
    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for (s, &pr) in self.probs.iter().enumerate() {
            for (i, mi) in m.iter_mut().enumerate() {
                if bit(s, i) == 1 {
                    *mi += pr;
                }
            }
        }
        m
    }

    pub fn expectation(&self, h: &[f64]) -> f64 {
        self.probs.iter().zip(h).map(|(p, v)| p * v).sum()
    }

    /// `var_f(h)`.
    pub fn variance(&self, h: &[f64]) -> f64 {
        let mean = self.expectation(h);
        self.probs
            .iter()
            .zip(h)
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .sum()
    }
}

impl Enumerable for BinaryDistribution {
    fn num_coordinates(&self) -> usize {
        self.p
    }

    fn log_weight(&self, state: usize) -> f64 {
        self.log_probs[state]
    }
}

/// Independent Bernoulli coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductBernoulli {
    q: Vec<f64>,
}

impl ProductBernoulli {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Parameter("need at least one coordinate".into()));
        }
        if let Some(bad) = q.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Parameter(format!(
                "inclusion probabilities must lie in (0, 1), got {bad}"
            )));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

impl Enumerable for ProductBernoulli {
    fn num_coordinates(&self) -> usize {
        self.q.len()
    }

    fn log_weight(&self, state: usize) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, q)| if bit(state, i) == 1 { q.ln() } else { (-q).ln_1p() })
            .sum()
    }
}

/// A symmetric block of `m` coordinates whose law depends only on the number
/// of active coordinates, followed by independent tail coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CollinearStructured {
    m: usize,
    /// Normalised `log q(s)` for `s = 0..=m`.
    log_block_mass: Vec<f64>,
    tail: Vec<f64>,
}

impl CollinearStructured {
    /// `block_mass[s]` is the unnormalised probability of each block
    /// configuration with `s` active coordinates.
    pub fn new(m: usize, block_mass: &[f64], tail_q: Vec<f64>) -> Result<Self> {
        if block_mass.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter("block masses must be finite and nonnegative".into()));
        }
        let logs: Vec<f64> = block_mass.iter().map(|v| v.ln()).collect();
        Self::from_log_mass(m, logs, tail_q)
    }

    pub fn from_log_mass(m: usize, log_block_mass: Vec<f64>, tail_q: Vec<f64>) -> Result<Self> {
        if m == 0 || log_block_mass.len() != m + 1 {
            return Err(Error::Parameter(format!(
                "block of size {m} needs {} masses, got {}",
                m + 1,
                log_block_mass.len()
            )));
        }
        if let Some(bad) = tail_q.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Parameter(format!("tail probabilities must lie in (0, 1), got {bad}")));
        }
        // Each size-s configuration appears C(m, s) times.
        let weighted: Vec<f64> = log_block_mass
            .iter()
            .enumerate()
            .map(|(s, l)| l + ln_binomial(m, s))
            .collect();
        let log_norm = log_sum_exp(&weighted)
            .map_err(|_| Error::Parameter("block mass has no positive entry".into()))?;
        Ok(Self {
            m,
            log_block_mass: log_block_mass.iter().map(|l| l - log_norm).collect(),
            tail: tail_q,
        })
    }

    /// Block mass shaped like a g-prior posterior over perfectly collinear
    /// predictors: `log q(s) = s logit(h) + 1{s>=1} (n-s)/2 log(1+c)`.
    pub fn g_prior_shape(m: usize, c: f64, h: f64, n: f64, tail_q: Vec<f64>) -> Result<Self> {
        if !(c > 0.0 && h > 0.0 && h < 1.0) {
            return Err(Error::Parameter(format!("need c > 0 and h in (0,1), got c = {c}, h = {h}")));
        }
        let logit_h = (h / (1.0 - h)).ln();
        let logs = (0..=m)
            .map(|s| {
                let s = s as f64;
                let lift = if s >= 1.0 { 0.5 * (n - s) * c.ln_1p() } else { 0.0 };
                s * logit_h + lift
            })
            .collect();
        Self::from_log_mass(m, logs, tail_q)
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    /// Normalised `q(s)`.
    pub fn block_mass(&self, s: usize) -> f64 {
        self.log_block_mass[s].exp()
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

impl Enumerable for CollinearStructured {
    fn num_coordinates(&self) -> usize {
        self.m + self.tail.len()
    }

    fn log_weight(&self, state: usize) -> f64 {
        let block = state & ((1usize << self.m) - 1);
        let mut l = self.log_block_mass[block.count_ones() as usize];
        for (j, q) in self.tail.iter().enumerate() {
            l += if bit(state, self.m + j) == 1 { q.ln() } else { (-q).ln_1p() };
        }
        l
    }
}

/// Modified conditional `g(x_i | x_-i)` for a binary coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinaryModification {
    Identity,
    /// `g = 1/2`, which makes the Metropolised update a deterministic flip.
    Uniform,
    Tempered { beta: f64 },
    Mixed { beta: f64, epsilon: f64 },
}

impl BinaryModification {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Identity | Self::Uniform => Ok(()),
            Self::Tempered { beta } | Self::Mixed { beta, .. } if !(beta > 0.0 && beta <= 1.0) => {
                Err(Error::Parameter(format!("beta must lie in (0, 1], got {beta}")))
            }
            Self::Mixed { epsilon, .. } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")))
            }
            _ => Ok(()),
        }
    }

    /// `g(x_i = 1 | x_-i)` from the conditional logit of `f`.
    pub fn prob_one(&self, logit: f64) -> f64 {
        match *self {
            Self::Identity => sigmoid(logit),
            Self::Uniform => 0.5,
            Self::Tempered { beta } => sigmoid(beta * logit),
            Self::Mixed { beta, epsilon } => {
                (sigmoid(logit) + epsilon * sigmoid(beta * logit)) / (1.0 + epsilon)
            }
        }
    }

    /// `log g(x_i = current | x_-i)`, accurate when the logit is large.
    pub fn log_prob_current(&self, logit: f64, current: u8) -> f64 {
        let l = if current == 1 { logit } else { -logit };
        match *self {
            Self::Identity => log_sigmoid(l),
            Self::Uniform => -std::f64::consts::LN_2,
            Self::Tempered { beta } => log_sigmoid(beta * l),
            Self::Mixed { beta, epsilon } => ((sigmoid(l) + epsilon * sigmoid(beta * l)) / (1.0 + epsilon)).ln(),
        }
    }

    /// `sup f/g`.
    pub fn ratio_bound(&self) -> Option<f64> {
        match *self {
            Self::Identity => Some(1.0),
            Self::Uniform => Some(2.0),
            Self::Tempered { .. } => None,
            Self::Mixed { epsilon, .. } => Some(1.0 + epsilon),
        }
    }
}

/// How a binary coordinate is refreshed once selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Draw `x_i` afresh from the conditional.
    Resample,
    /// Propose the flip and accept with `min(1, g(flip) / g(current))`.
    Metropolised,
}

/// `eta_i(x_-i)` for weighted TGS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSpec {
    Constant,
    /// `eta_i = f(x_i = 1 | x_-i) + k / p`.
    Inclusion { k: f64 },
}

impl EtaSpec {
    pub fn eval(&self, prob_one: f64, p: usize) -> f64 {
        match *self {
            Self::Constant => 1.0,
            Self::Inclusion { k } => prob_one + k / p as f64,
        }
    }
}

/// A tabulated binary target with a choice of `g`, `eta` and update rule;
/// runs under [`crate::sampler::run_chain`] and [`build_kernel`].
#[derive(Clone, Debug)]
pub struct BinaryModel {
    pub distribution: BinaryDistribution,
    pub modification: BinaryModification,
    pub update: UpdateRule,
    pub eta: EtaSpec,
}

impl BinaryModel {
    pub fn new(
        distribution: BinaryDistribution,
        modification: BinaryModification,
        update: UpdateRule,
        eta: EtaSpec,
    ) -> Result<Self> {
        modification.validate()?;
        if let EtaSpec::Inclusion { k } = eta {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Parameter(format!("k must be nonnegative, got {k}")));
            }
        }
        Ok(Self {
            distribution,
            modification,
            update,
            eta,
        })
    }

    /// The variable-selection form: uniform `g`, flips always accepted.
    pub fn flip(distribution: BinaryDistribution, eta: EtaSpec) -> Self {
        Self {
            distribution,
            modification: BinaryModification::Uniform,
            update: UpdateRule::Metropolised,
            eta,
        }
    }

    fn p(&self) -> usize {
        self.distribution.p()
    }

    /// Probability that coordinate `i` changes when updated with the
    /// conditional whose `P(1)` is `prob_one`.
    fn move_probability(&self, prob_one: f64, current: u8) -> f64 {
        let (cur, other) = if current == 1 {
            (prob_one, 1.0 - prob_one)
        } else {
            (1.0 - prob_one, prob_one)
        };
        match self.update {
            UpdateRule::Resample => other,
            UpdateRule::Metropolised => (other / cur).min(1.0),
        }
    }
}

fn log_current_from_logit(logit: f64, current: u8) -> f64 {
    if current == 1 {
        log_sigmoid(logit)
    } else {
        log_sigmoid(-logit)
    }
}

impl Target for BinaryModel {
    type Coord = u8;

    fn dim(&self) -> usize {
        self.p()
    }

    fn log_conditional(&self, i: usize, x: &[u8]) -> f64 {
        let logit = self.distribution.conditional_logit(i, state_index(x));
        log_current_from_logit(logit, x[i])
    }

    fn log_modified(&self, i: usize, x: &[u8]) -> f64 {
        let logit = self.distribution.conditional_logit(i, state_index(x));
        self.modification.log_prob_current(logit, x[i])
    }

    fn sample_conditional<R: Rng + ?Sized>(&self, i: usize, x: &[u8], rng: &mut R) -> u8 {
        let f1 = self.distribution.conditional_one(i, state_index(x));
        let u: f64 = rng.random();
        if u < self.move_probability(f1, x[i]) {
            1 - x[i]
        } else {
            x[i]
        }
    }

    fn sample_modified<R: Rng + ?Sized>(&self, i: usize, x: &[u8], rng: &mut R) -> u8 {
        let logit = self.distribution.conditional_logit(i, state_index(x));
        let g1 = self.modification.prob_one(logit);
        let u: f64 = rng.random();
        if u < self.move_probability(g1, x[i]) {
            1 - x[i]
        } else {
            x[i]
        }
    }

    fn log_eta(&self, i: usize, x: &[u8]) -> Option<f64> {
        let f1 = self.distribution.conditional_one(i, state_index(x));
        Some(self.eta.eval(f1, self.p()).ln())
    }

    fn inclusion_probabilities(&self, x: &[u8]) -> Option<Vec<f64>> {
        let s = state_index(x);
        Some((0..self.p()).map(|i| self.distribution.conditional_one(i, s)).collect())
    }

    fn default_state(&self) -> Vec<u8> {
        vec![0; self.p()]
    }
}

/// Explicit transition matrix of a kernel on an enumerated state space.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub kernel: Kernel,
    /// Row-stochastic `P(x, y)`.
    pub transition: DMatrix<f64>,
    /// Invariant law: `f` for GS, `f Z` for TGS and wTGS.
    pub stationary: Vec<f64>,
    /// The target `f`.
    pub target: Vec<f64>,
    /// Normalised `Z(x)` (so that `sum_x f Z = 1`), TGS and wTGS only.
    pub z: Option<Vec<f64>>,
    /// Continuous-time jump matrix `Q(x, y) = Z(x) P(x, y)` off the diagonal,
    /// rows summing to zero.
    pub jump: Option<DMatrix<f64>>,
    /// Long-run fraction of iterations selecting each coordinate.
    pub index_frequencies: Vec<f64>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.stationary.len()
    }

    /// `max_{x,y} |pi(x) P(x,y) - pi(y) P(y,x)|`.
    pub fn detailed_balance_residual(&self) -> f64 {
        detailed_balance_residual(&self.transition, &self.stationary)
    }

    /// `max_y |(pi P)(y) - pi(y)|`.
    pub fn stationarity_residual(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|y| {
                let flow: f64 = (0..n).map(|x| self.stationary[x] * self.transition[(x, y)]).sum();
                (flow - self.stationary[y]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.transition
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn detailed_balance_residual(transition: &DMatrix<f64>, stationary: &[f64]) -> f64 {
    let n = stationary.len();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            let a = stationary[x] * transition[(x, y)];
            let b = stationary[y] * transition[(y, x)];
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Builds the transition matrix of `kernel` on `model`.
///
/// GS updates with the model's rule applied to `f`, picking coordinates
/// uniformly; TGS and wTGS apply the rule to `g` and select with `p_i`.
pub fn build_kernel(model: &BinaryModel, kernel: Kernel) -> Result<KernelMatrix> {
    let dist = &model.distribution;
    let p = dist.p();
    let n = dist.len();
    if let Some(s) = (0..n).find(|&s| dist.prob(s) <= 0.0) {
        return Err(Error::ZeroProbabilityState { state: s });
    }

    // E_f[eta_i] summed over i, for the wTGS normalising constant.
    let zeta: f64 = (0..n)
        .map(|s| {
            let eta: f64 = (0..p).map(|i| model.eta.eval(dist.conditional_one(i, s), p)).sum();
            dist.prob(s) * eta
        })
        .sum();

    let mut transition = DMatrix::zeros(n, n);
    let mut z = vec![1.0; n];
    let mut selections = vec![vec![0.0; p]; n];
    for s in 0..n {
        let logits: Vec<f64> = (0..p).map(|i| dist.conditional_logit(i, s)).collect();
        let sel: Vec<f64> = match kernel {
            Kernel::Gibbs => vec![1.0 / p as f64; p],
            Kernel::Tempered | Kernel::Weighted => {
                let ratios: Vec<f64> = (0..p)
                    .map(|i| {
                        let cur = bit(s, i);
                        let f = log_current_from_logit(logits[i], cur);
                        let g = model.modification.log_prob_current(logits[i], cur);
                        let eta = if kernel == Kernel::Weighted {
                            model.eta.eval(sigmoid(logits[i]), p)
                        } else {
                            1.0
                        };
                        eta * (g - f).exp()
                    })
                    .collect();
                let total: f64 = ratios.iter().sum();
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::DegenerateSelection);
                }
                z[s] = if kernel == Kernel::Weighted {
                    total / zeta
                } else {
                    total / p as f64
                };
                ratios.into_iter().map(|r| r / total).collect()
            }
        };
        for i in 0..p {
            let prob_one = match kernel {
                Kernel::Gibbs => sigmoid(logits[i]),
                _ => model.modification.prob_one(logits[i]),
            };
            let mv = model.move_probability(prob_one, bit(s, i));
            transition[(s, s ^ (1 << i))] += sel[i] * mv;
            transition[(s, s)] += sel[i] * (1.0 - mv);
        }
        selections[s] = sel;
    }

    let target = dist.probs().to_vec();
    let (stationary, z, jump) = match kernel {
        Kernel::Gibbs => (target.clone(), None, None),
        _ => {
            let stationary: Vec<f64> = target.iter().zip(&z).map(|(f, z)| f * z).collect();
            let mut q = DMatrix::zeros(n, n);
            for s in 0..n {
                let mut out = 0.0;
                for i in 0..p {
                    let t = s ^ (1 << i);
                    let rate = z[s] * transition[(s, t)];
                    q[(s, t)] = rate;
                    out += rate;
                }
                q[(s, s)] = -out;
            }
            (stationary, Some(z), Some(q))
        }
    };
    let mut index_frequencies = vec![0.0; p];
    for (s, sel) in selections.iter().enumerate() {
        for (fi, si) in index_frequencies.iter_mut().zip(sel) {
            *fi += stationary[s] * si;
        }
    }
    Ok(KernelMatrix {
        kernel,
        transition,
        stationary,
        target,
        z,
        jump,
        index_frequencies,
    })
}

/// Writes `state,bits,probability` rows; `bits` lists `x_1..x_p`.
pub fn write_table_csv(path: &Path, dist: &BinaryDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "bits", "probability"])?;
    for s in 0..dist.len() {
        let bits: String = state_bits(s, dist.p()).iter().map(|b| char::from(b'0' + b)).collect();
        w.write_record([s.to_string(), bits, fmt_real(dist.prob(s))])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_kernel_csv(path: &Path, kernel: &KernelMatrix) -> Result<()> {
    crate::io::write_matrix_csv(path, &kernel.transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::variance::exact_asymptotic_variance;
    use crate::sampler::{run_chain, RunOptions};

    fn product(q: &[f64]) -> BinaryDistribution {
        enumerate_distribution(&ProductBernoulli::new(q.to_vec()).unwrap(), DEFAULT_MAX_STATES).unwrap()
    }

    #[test]
    fn single_coordinate_table() {
        let d = product(&[0.3]);
        assert!((d.prob(0) - 0.7).abs() < 1e-15);
        assert!((d.prob(1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn product_marginals() {
        let d = product(&[0.2, 0.5, 0.8]);
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (m, q) in d.marginals().iter().zip([0.2, 0.5, 0.8]) {
            assert!((m - q).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_table_by_direct_summation() {
        let t = CollinearStructured::new(2, &[0.05, 0.45, 0.05], vec![0.1]).unwrap();
        let d = enumerate_distribution(&t, DEFAULT_MAX_STATES).unwrap();
        assert_eq!(d.len(), 8);
        let p_first: f64 = (0..8).filter(|s| s & 1 == 1).map(|s| d.prob(s)).sum();
        assert!((p_first - 0.5).abs() < 1e-12);
        // 01 and 10 carry q(1) each, times the tail.
        assert!((d.prob(0b001) - 0.45 * 0.9).abs() < 1e-12);
        assert!((d.prob(0b110) - 0.45 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn collinear_block_is_symmetric() {
        let t = CollinearStructured::g_prior_shape(3, 100.0, 0.2, 5.0, vec![0.3, 0.6]).unwrap();
        for s in 0..32usize {
            let block = s & 0b111;
            let rest = s & !0b111;
            // Rotate the block bits.
            let rotated = ((block << 1) | (block >> 2)) & 0b111;
            assert_eq!(t.log_weight(s), t.log_weight(rest | rotated));
        }
    }

    #[test]
    fn refuses_large_state_spaces() {
        let t = ProductBernoulli::new(vec![0.5; 21]).unwrap();
        let err = enumerate_distribution(&t, DEFAULT_MAX_STATES).unwrap_err();
        assert!(matches!(err, Error::StateSpaceTooLarge { required, .. } if required == 1 << 21));
    }

    #[test]
    fn metropolised_gs_on_fair_coin_always_flips() {
        let m = BinaryModel::new(product(&[0.5]), BinaryModification::Identity, UpdateRule::Metropolised, EtaSpec::Constant).unwrap();
        let k = build_kernel(&m, Kernel::Gibbs).unwrap();
        assert_eq!(k.transition, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn tgs_uniform_g_detailed_balance() {
        let m = BinaryModel::flip(product(&[0.5, 0.5]), EtaSpec::Constant);
        let k = build_kernel(&m, Kernel::Tempered).unwrap();
        assert!(k.detailed_balance_residual() < 1e-14);
        let total: f64 = k.stationary.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn built_kernels_are_stationary() {
        let t = CollinearStructured::g_prior_shape(2, 50.0, 0.3, 4.0, vec![0.2, 0.7]).unwrap();
        let d = enumerate_distribution(&t, DEFAULT_MAX_STATES).unwrap();
        for (modification, rule) in [
            (BinaryModification::Uniform, UpdateRule::Metropolised),
            (BinaryModification::Mixed { beta: 0.2, epsilon: 1.0 }, UpdateRule::Resample),
            (BinaryModification::Tempered { beta: 0.5 }, UpdateRule::Metropolised),
            (BinaryModification::Identity, UpdateRule::Resample),
        ] {
            let m = BinaryModel::new(d.clone(), modification, rule, EtaSpec::Inclusion { k: 1.0 }).unwrap();
            for kernel in [Kernel::Gibbs, Kernel::Tempered, Kernel::Weighted] {
                let k = build_kernel(&m, kernel).unwrap();
                assert!(k.stationarity_residual() < 1e-10, "{modification:?} {kernel}");
                assert!(k.max_row_sum_error() < 1e-12);
                if let Some(q) = &k.jump {
                    for r in q.row_iter() {
                        assert!(r.sum().abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn weighted_frequencies_follow_eta() {
        let m = BinaryModel::flip(product(&[0.9, 0.1]), EtaSpec::Inclusion { k: 0.0 });
        let k = build_kernel(&m, Kernel::Weighted).unwrap();
        assert!((k.index_frequencies[0] - 0.9).abs() < 1e-12);
        assert!((k.index_frequencies[1] - 0.1).abs() < 1e-12);

        let trace = run_chain(&m, Kernel::Weighted, RunOptions::new(100_000, 9), None).unwrap();
        let ones = trace.samples.iter().filter(|s| s.index == 0).count() as f64;
        let freq = ones / trace.len() as f64;
        assert!((freq - 0.9).abs() < 0.01, "empirical frequency {freq}");
    }

    #[test]
    fn empirical_tgs_matches_fz() {
        let d = enumerate_distribution(&CollinearStructured::new(2, &[0.1, 0.35, 0.2], vec![]).unwrap(), 16).unwrap();
        let m = BinaryModel::new(d, BinaryModification::Mixed { beta: 0.3, epsilon: 1.0 }, UpdateRule::Resample, EtaSpec::Constant).unwrap();
        let k = build_kernel(&m, Kernel::Tempered).unwrap();
        let n = 100_000;
        let trace = run_chain(&m, Kernel::Tempered, RunOptions::new(n, 4).with_burn_in(0), None).unwrap();
        let mut counts = [0.0f64; 4];
        for s in &trace.samples {
            counts[state_index(&s.state)] += 1.0;
        }
        for (s, (c, pi)) in counts.iter().zip(&k.stationary).enumerate() {
            let freq = c / n as f64;
            let indicator: Vec<f64> = (0..4).map(|t| (t == s) as u8 as f64).collect();
            let sigma2 = exact_asymptotic_variance(&k.transition, &k.stationary, &indicator).unwrap();
            let se = (sigma2 / n as f64).sqrt();
            assert!((freq - pi).abs() < 4.0 * se, "freq {freq} vs {pi}, se {se}");
        }
    }

    #[test]
    fn table_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table_csv(&path, &product(&[0.25, 0.5])).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "state,bits,probability");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("1,10,"));
    }
}
