//! GS, TGS and wTGS on the variable-selection posterior.
//!
//! TGS and wTGS use the uniform modified conditional on `{0,1}` with the
//! Metropolised update, so the selected coordinate is always flipped and
//! `p_i = eta_i / (2 f(g_i current | g_-i))`. GS picks a coordinate
//! uniformly and accepts its flip with `min(1, f(flip) / f(current))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bvs::data::BvsDataset;
use crate::bvs::marginal::BvsPrior;
use crate::bvs::state::{GammaState, StateMode};
use crate::discrete::{log_sigmoid, sigmoid};
use crate::error::{Error, Result};
use crate::sampler::{chain_rng, log_sum_exp, Kernel, WeightedSums};
use crate::timing::thread_cpu_time;

pub const DEFAULT_K: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvsOptions {
    pub n_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
    /// Shift in `eta_i = f(g_i = 1 | g_-i) + k / p` for wTGS.
    pub k: f64,
    /// Record running PIP estimates every `thin` retained iterations (0 = off).
    pub thin: usize,
    /// Run GS with full conditional sweeps so it can report Rao-Blackwell PIPs.
    pub gs_rao_blackwell: bool,
}

impl BvsOptions {
    pub fn new(n_iters: usize, seed: u64) -> Self {
        Self {
            n_iters,
            burn_in: n_iters / 10,
            seed,
            stream: 0,
            k: DEFAULT_K,
            thin: 0,
            gs_rao_blackwell: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.n_iters, self.burn_in
            )));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be nonnegative, got {}", self.k)));
        }
        Ok(())
    }
}

/// Running sums of `w` and `w^2` on a floating log scale.
#[derive(Clone, Debug, Default)]
struct WeightMoments {
    log_scale: Option<f64>,
    s1: f64,
    s2: f64,
    n: usize,
}

impl WeightMoments {
    fn push(&mut self, log_w: f64) {
        let scale = match self.log_scale {
            Some(s) if log_w <= s => s,
            Some(s) => {
                let f = (s - log_w).exp();
                self.s1 *= f;
                self.s2 *= f * f;
                self.log_scale = Some(log_w);
                log_w
            }
            None => {
                self.log_scale = Some(log_w);
                log_w
            }
        };
        let w = (log_w - scale).exp();
        self.s1 += w;
        self.s2 += w * w;
        self.n += 1;
    }

    fn variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.n as f64 * self.s2 / (self.s1 * self.s1) - 1.0).max(0.0)
    }
}

/// Running estimates at one retained iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningEstimate {
    pub iteration: usize,
    pub frequency: Vec<f64>,
    pub rao_blackwell: Option<Vec<f64>>,
}

/// Summary of one variable-selection run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BvsTrace {
    pub kernel: Kernel,
    pub n_iters: usize,
    pub burn_in: usize,
    /// Weighted fraction of retained iterations with `g_i = 1`.
    pub pip_frequency: Vec<f64>,
    /// Weighted average of `f(g_i = 1 | g_-i)` over retained iterations.
    pub pip_rao_blackwell: Option<Vec<f64>>,
    /// Times each coordinate changed value (all iterations).
    pub flips: Vec<u64>,
    /// Times each coordinate was selected (all iterations).
    pub selections: Vec<u64>,
    pub weight_variance: f64,
    pub max_log_weight: f64,
    pub mean_model_size: f64,
    pub fallbacks: u64,
    pub clamps: u64,
    pub final_gamma: Vec<bool>,
    pub running: Vec<RunningEstimate>,
    pub cpu_seconds: f64,
}

impl BvsTrace {
    /// Rao-Blackwell PIPs, or a capability error for runs that did not
    /// accumulate them.
    pub fn rao_blackwell_pips(&self) -> Result<&[f64]> {
        self.pip_rao_blackwell.as_deref().ok_or(Error::MissingRaoBlackwell)
    }

    /// Rao-Blackwell PIPs when present, frequencies otherwise.
    pub fn best_pips(&self) -> &[f64] {
        self.pip_rao_blackwell.as_deref().unwrap_or(&self.pip_frequency)
    }
}

/// Log selection weights `log p_i` from the conditional log-odds.
///
/// A coordinate whose addition leaves the support (`logit = -inf` while
/// excluded) uses `g = f` there: its `p_i` is 1 and selecting it is a no-op.
pub fn selection_log_weights(logits: &[f64], gamma: &[bool], kernel: Kernel, k: f64, out: &mut [f64]) {
    let p = logits.len();
    let shift = k / p as f64;
    for j in 0..p {
        let frozen = logits[j] == f64::NEG_INFINITY && !gamma[j];
        let base = if frozen {
            0.0
        } else {
            let log_current = if gamma[j] { log_sigmoid(logits[j]) } else { log_sigmoid(-logits[j]) };
            -std::f64::consts::LN_2 - log_current
        };
        out[j] = match kernel {
            Kernel::Weighted => base + (sigmoid(logits[j]) + shift).ln(),
            _ => base,
        };
    }
}

/// Smallest current-value conditional for which `p_i` is formed directly;
/// below it the selection weights are built on the log scale.
const LINEAR_FLOOR: f64 = 1e-200;

/// A variable-selection chain positioned at a state.
pub struct BvsSampler<'a> {
    state: GammaState<'a>,
    kernel: Kernel,
    k: f64,
    rb_for_gs: bool,
    logits: Vec<f64>,
    probs: Vec<f64>,
    /// `p_i`, or `p_i / sum p_j` on the log-scale route.
    sel: Vec<f64>,
    sel_total: f64,
    /// `log p_i` when the log-scale route was taken.
    log_sel: Option<Vec<f64>>,
    log_weight: f64,
}

impl<'a> BvsSampler<'a> {
    pub fn new(
        data: &'a BvsDataset,
        prior: BvsPrior,
        kernel: Kernel,
        k: f64,
        gs_rao_blackwell: bool,
        initial: Option<Vec<bool>>,
    ) -> Result<Self> {
        let sweeps = kernel != Kernel::Gibbs || gs_rao_blackwell;
        let mode = if sweeps { StateMode::Sweep } else { StateMode::Local };
        let gamma = initial.unwrap_or_else(|| vec![false; data.p()]);
        let state = GammaState::new(data, prior, gamma, mode)?;
        let p = data.p();
        let mut s = Self {
            state,
            kernel,
            k,
            rb_for_gs: gs_rao_blackwell,
            logits: vec![0.0; p],
            probs: vec![0.0; p],
            sel: vec![0.0; p],
            sel_total: 0.0,
            log_sel: None,
            log_weight: 0.0,
        };
        if sweeps {
            s.refresh()?;
        }
        Ok(s)
    }

    fn refresh(&mut self) -> Result<()> {
        self.state.conditional_logits(&mut self.logits);
        let tempered = self.kernel != Kernel::Gibbs;
        let weighted = self.kernel == Kernel::Weighted;
        let shift = self.k / self.logits.len() as f64;
        let gamma = self.state.gamma();
        let mut total = 0.0;
        let mut linear = true;
        for j in 0..self.logits.len() {
            let l = self.logits[j];
            // P(1) and P(0) from a single exponential.
            let (one, zero) = if l >= 0.0 {
                let e = (-l).exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            } else {
                let e = l.exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            };
            self.probs[j] = one;
            if tempered {
                let frozen = l == f64::NEG_INFINITY && !gamma[j];
                let current = if gamma[j] { one } else { zero };
                if !frozen && current < LINEAR_FLOOR {
                    linear = false;
                }
                let base = if frozen { 1.0 } else { 0.5 / current };
                let v = if weighted { base * (one + shift) } else { base };
                self.sel[j] = v;
                total += v;
            }
        }
        if !tempered {
            return Ok(());
        }
        if linear && total.is_finite() && total > 0.0 {
            self.sel_total = total;
            self.log_sel = None;
            let log_sum = total.ln();
            self.log_weight = if weighted { -log_sum } else { (self.logits.len() as f64).ln() - log_sum };
            return Ok(());
        }
        let mut log_sel = self.log_sel.take().unwrap_or_default();
        log_sel.resize(self.logits.len(), 0.0);
        selection_log_weights(&self.logits, gamma, self.kernel, self.k, &mut log_sel);
        let log_sum = log_sum_exp(&log_sel)?;
        for (v, lp) in self.sel.iter_mut().zip(&log_sel) {
            *v = (lp - log_sum).exp();
        }
        self.log_sel = Some(log_sel);
        self.sel_total = self.sel.iter().sum();
        self.log_weight = if weighted { -log_sum } else { (self.logits.len() as f64).ln() - log_sum };
        Ok(())
    }

    fn draw(&self, u: f64) -> usize {
        let target = u * self.sel_total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, v) in self.sel.iter().enumerate() {
            if *v > 0.0 {
                acc += v;
                last = i;
                if target < acc {
                    return i;
                }
            }
        }
        last
    }

    pub fn state(&self) -> &GammaState<'a> {
        &self.state
    }

    /// Conditional log-odds at the current state (sweep mode only).
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// `f(g_i = 1 | g_-i)` at the current state (sweep mode only).
    pub fn conditional_probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Log selection weights `log p_i` at the current state (TGS and wTGS).
    pub fn selection_log_weights(&self) -> Vec<f64> {
        match &self.log_sel {
            Some(l) => l.clone(),
            None => self.sel.iter().map(|v| v.ln()).collect(),
        }
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    /// One iteration; returns the selected coordinate and whether it changed.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, bool)> {
        let u: f64 = rng.random();
        let p = self.state.p();
        match self.kernel {
            Kernel::Gibbs => {
                let i = ((u * p as f64) as usize).min(p - 1);
                let delta = self.state.flip_log_ratio(i);
                let v: f64 = rng.random();
                let moved = delta >= 0.0 || v < delta.exp();
                if moved {
                    self.state.flip(i)?;
                    if self.rb_for_gs {
                        self.refresh()?;
                    }
                }
                Ok((i, moved))
            }
            Kernel::Tempered | Kernel::Weighted => {
                let i = self.draw(u);
                let frozen = self.logits[i] == f64::NEG_INFINITY && !self.state.gamma()[i];
                if !frozen {
                    self.state.flip(i)?;
                }
                self.refresh()?;
                Ok((i, !frozen))
            }
        }
    }
}

/// Runs one chain from `initial` (default: the empty model).
pub fn run_bvs(
    data: &BvsDataset,
    prior: BvsPrior,
    kernel: Kernel,
    options: BvsOptions,
    initial: Option<Vec<bool>>,
) -> Result<BvsTrace> {
    options.validate()?;
    let cpu_start = thread_cpu_time();
    let p = data.p();
    let mut rng = chain_rng(options.seed, options.stream);
    let mut sampler = BvsSampler::new(data, prior, kernel, options.k, options.gs_rao_blackwell, initial)?;
    let with_rb = kernel != Kernel::Gibbs || options.gs_rao_blackwell;

    let mut freq = WeightedSums::new(p);
    let mut rb = with_rb.then(|| WeightedSums::new(p));
    let mut moments = WeightMoments::default();
    let mut flips = vec![0u64; p];
    let mut selections = vec![0u64; p];
    let mut size_sum = 0.0;
    let mut max_log_weight = f64::NEG_INFINITY;
    let mut running = Vec::new();

    for t in 0..options.n_iters {
        let (i, moved) = sampler.step(&mut rng)?;
        selections[i] += 1;
        flips[i] += moved as u64;
        if cfg!(debug_assertions) && (t + 1) % 1000 == 0 {
            let drift = sampler.state.verify()?;
            debug_assert!(drift < 1e-8, "cached statistics drifted by {drift} at iteration {t}");
        }
        if t < options.burn_in {
            continue;
        }
        let lw = sampler.log_weight;
        freq.add_indicators(lw, sampler.state.active());
        if let Some(acc) = rb.as_mut() {
            acc.add(lw, &sampler.probs);
        }
        moments.push(lw);
        max_log_weight = max_log_weight.max(lw);
        size_sum += sampler.state.size() as f64;
        let retained = t + 1 - options.burn_in;
        if options.thin > 0 && retained % options.thin == 0 {
            running.push(RunningEstimate {
                iteration: t + 1,
                frequency: freq.estimates().unwrap_or_default(),
                rao_blackwell: rb.as_ref().and_then(WeightedSums::estimates),
            });
        }
    }
    let retained = (options.n_iters - options.burn_in) as f64;
    let cpu_seconds = (thread_cpu_time() - cpu_start).as_secs_f64();
    Ok(BvsTrace {
        kernel,
        n_iters: options.n_iters,
        burn_in: options.burn_in,
        pip_frequency: freq.estimates().unwrap_or_else(|| vec![0.0; p]),
        pip_rao_blackwell: rb.as_ref().and_then(WeightedSums::estimates),
        flips,
        selections,
        weight_variance: moments.variance(),
        max_log_weight,
        mean_model_size: size_sum / retained,
        fallbacks: sampler.state.fallbacks(),
        clamps: sampler.state.clamps(),
        final_gamma: sampler.state.gamma().to_vec(),
        running,
        cpu_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvs::data::{simulate_scenario, DatasetOptions, SimScenario, SimulatedData};
    use crate::bvs::enumerate_posterior;
    use crate::bvs::marginal::PriorKind;
    use crate::discrete::{state_bits, BinaryModel, EtaSpec, DEFAULT_MAX_STATES};
    use crate::sampler::selection_probabilities;

    fn small(p: usize, seed: u64) -> SimulatedData {
        simulate_scenario(SimScenario::CorrelatedBlocks, p, 30, 2.0, seed, DatasetOptions::default()).unwrap()
    }

    #[test]
    fn half_conditionals_give_uniform_selection() {
        let logits = [0.0; 5];
        let gamma = [true, false, false, true, false];
        let mut out = [1.0; 5];
        selection_log_weights(&logits, &gamma, Kernel::Tempered, 0.0, &mut out);
        assert_eq!(out, [0.0; 5]);
        selection_log_weights(&logits, &gamma, Kernel::Weighted, 2.0, &mut out);
        for v in out {
            assert!((v - (0.5f64 + 2.0 / 5.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn tempered_weights_never_exceed_two() {
        let sim = small(10, 2);
        let prior = BvsPrior::new(100.0, 0.2, PriorKind::GPrior).unwrap();
        let trace = run_bvs(&sim.dataset, prior, Kernel::Tempered, BvsOptions::new(3000, 1), None).unwrap();
        assert!(trace.max_log_weight <= std::f64::consts::LN_2 + 1e-12);
        assert_eq!(trace.flips, trace.selections);
    }

    #[test]
    fn large_k_approaches_tempered_selection() {
        let sim = small(8, 4);
        let prior = BvsPrior::new(100.0, 0.3, PriorKind::Independence).unwrap();
        let gamma = vec![true, true, false, false, true, false, false, false];
        let t = BvsSampler::new(&sim.dataset, prior, Kernel::Tempered, 0.0, false, Some(gamma.clone())).unwrap();
        let w = BvsSampler::new(&sim.dataset, prior, Kernel::Weighted, 1e7, false, Some(gamma)).unwrap();
        let norm = |lp: &[f64]| {
            let l = log_sum_exp(lp).unwrap();
            lp.iter().map(|v| (v - l).exp()).collect::<Vec<_>>()
        };
        for (a, b) in norm(&t.selection_log_weights()).iter().zip(norm(&w.selection_log_weights())) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn extreme_conditionals_use_the_log_scale() {
        let sim = simulate_scenario(SimScenario::CorrelatedPair, 10, 300, 200.0, 2, DatasetOptions::default()).unwrap();
        let prior = BvsPrior::benchmark_default(10);
        for kernel in [Kernel::Tempered, Kernel::Weighted] {
            let s = BvsSampler::new(&sim.dataset, prior, kernel, 5.0, false, None).unwrap();
            assert!(s.log_sel.is_some());
            assert!(s.log_weight() < -400.0, "{}", s.log_weight());
            let mut direct = vec![0.0; 10];
            selection_log_weights(s.logits(), s.state().gamma(), kernel, 5.0, &mut direct);
            for (a, b) in s.selection_log_weights().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
            let log_z = log_sum_exp(&direct).unwrap() - if kernel == Kernel::Tempered { (10f64).ln() } else { 0.0 };
            assert!((s.log_weight() + log_z).abs() < 1e-9 * log_z.abs());
        }
    }

    #[test]
    fn engine_matches_tabulated_flip_model() {
        let sim = small(6, 9);
        let prior = BvsPrior::new(50.0, 0.25, PriorKind::GPrior).unwrap();
        let dist = enumerate_posterior(&sim.dataset, prior, DEFAULT_MAX_STATES).unwrap();
        for (kernel, eta) in [(Kernel::Tempered, EtaSpec::Constant), (Kernel::Weighted, EtaSpec::Inclusion { k: 3.0 })] {
            let model = BinaryModel::flip(dist.clone(), eta);
            for s in 0..dist.len() {
                let bits = state_bits(s, 6);
                let gamma: Vec<bool> = bits.iter().map(|b| *b == 1).collect();
                let engine = BvsSampler::new(&sim.dataset, prior, kernel, 3.0, false, Some(gamma)).unwrap();
                let sel = selection_probabilities(&model, &bits, kernel == Kernel::Weighted).unwrap();
                for (a, b) in engine.selection_log_weights().iter().zip(sel.log_probabilities()) {
                    assert!((a - b).abs() < 1e-9, "state {s}: {a} vs {b}");
                }
                assert!((engine.log_weight() - sel.log_weight()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn estimates_converge_to_enumeration() {
        let sim = small(8, 13);
        let prior = BvsPrior::new(100.0, 0.25, PriorKind::GPrior).unwrap();
        let exact = enumerate_posterior(&sim.dataset, prior, DEFAULT_MAX_STATES).unwrap().marginals();
        for kernel in [Kernel::Gibbs, Kernel::Tempered, Kernel::Weighted] {
            let mut opts = BvsOptions::new(300_000, 21);
            opts.gs_rao_blackwell = kernel == Kernel::Gibbs;
            let trace = run_bvs(&sim.dataset, prior, kernel, opts, None).unwrap();
            let rb = trace.rao_blackwell_pips().unwrap();
            for j in 0..8 {
                assert!((rb[j] - exact[j]).abs() < 0.02, "{kernel} rb {j}: {} vs {}", rb[j], exact[j]);
                assert!((trace.pip_frequency[j] - exact[j]).abs() < 0.03, "{kernel} freq {j}");
            }
        }
    }

    #[test]
    fn plain_gibbs_has_no_rao_blackwell() {
        let sim = small(6, 1);
        let prior = BvsPrior::benchmark_default(6);
        let trace = run_bvs(&sim.dataset, prior, Kernel::Gibbs, BvsOptions::new(200, 3), None).unwrap();
        assert!(matches!(trace.rao_blackwell_pips(), Err(Error::MissingRaoBlackwell)));
        assert_eq!(trace.best_pips(), &trace.pip_frequency[..]);
        assert_eq!(trace.selections.iter().sum::<u64>(), 200);
    }

    #[test]
    fn running_estimates_are_thinned() {
        let sim = small(6, 1);
        let prior = BvsPrior::benchmark_default(6);
        let mut opts = BvsOptions::new(1000, 3);
        opts.thin = 100;
        let trace = run_bvs(&sim.dataset, prior, Kernel::Weighted, opts, None).unwrap();
        assert_eq!(trace.running.len(), 9);
        assert_eq!(trace.running.last().unwrap().rao_blackwell.as_deref(), trace.pip_rao_blackwell.as_deref());
    }
}
