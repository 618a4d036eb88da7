//! The property battery behind `tgs verify`.
//!
//! Each check recomputes its quantities from the public API and reports a
//! named pass/fail line. [`WeightFormula::Tampered`] swaps the selection
//! ratio to `f/g`, a negative control for the reversibility check.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::barker::{gaussian_ar_kernel, left_stationary};
use crate::analysis::spectral::{generator_gap, relaxation_times, RelaxationSpec};
use crate::analysis::variance::{
    gibbs_asymptotic_variance, sis_variance, target_variance, tgs_asymptotic_variance, weight_variance_exact,
};
use crate::bvs::{
    log_marginal, simulate_scenario, BvsPrior, BvsSampler, DatasetOptions, GammaState, PriorKind, SimScenario,
    StateMode, DEFAULT_K,
};
use crate::discrete::{
    build_kernel, detailed_balance_residual, enumerate_distribution, state_bits, BinaryDistribution, BinaryModel,
    BinaryModification, CollinearStructured, EtaSpec, ProductBernoulli, UpdateRule,
};
use crate::error::Result;
use crate::gaussian::{GaussianModel, GaussianTarget, ModifiedConditionalSpec};
use crate::timing::thread_cpu_time;
use crate::sampler::{chain_rng, log_sum_exp, selection_probabilities, ChainRng, Kernel, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Self::Fast),
            "full" => Ok(Self::Full),
            other => Err(crate::Error::Config(format!("unknown verify level `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFormula {
    Standard,
    Tampered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub level: Level,
    pub seed: u64,
    pub weight_formula: WeightFormula,
}

impl VerifyOptions {
    pub fn new(level: Level) -> Self {
        Self {
            level,
            seed: 20_180_101,
            weight_formula: WeightFormula::Standard,
        }
    }
}

/// Runs every property for `options.level`.
pub fn run_checks(options: &VerifyOptions) -> Vec<PropertyResult> {
    let full = options.level == Level::Full;
    let mut out = vec![
        timed("reversibility", || reversibility(options)),
        timed("bounds", || bounds(options.seed, if full { 12 } else { 6 })),
        timed("relaxation_scaling", relaxation_scaling),
        timed("weight_variance_decay", || weight_variance_decay(options.seed, if full { 40_000 } else { 10_000 })),
        timed("barker_kernel", barker_kernel),
        timed("cache_consistency", || cache_consistency(options.seed, if full { 10_000 } else { 2_000 })),
    ];
    if full {
        out.push(timed("collinear_trend", collinear_trend));
        out.push(timed("cost_scaling", || cost_scaling(options.seed, &[250, 500, 1000, 2000])));
    }
    out
}

fn timed<F: FnOnce() -> Result<(bool, String)>>(name: &str, f: F) -> PropertyResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    PropertyResult {
        name: name.into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// A random distribution on `{0,1}^p` with log masses uniform on `[-3, 3]`.
pub fn random_distribution(rng: &mut ChainRng, p: usize) -> Result<BinaryDistribution> {
    let lw = (0..1usize << p).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect();
    BinaryDistribution::from_log_weights(p, lw)
}

/// Unnormalised `Z(x)` at every state as the running sampler computes it.
pub fn runtime_z(model: &BinaryModel, kernel: Kernel, formula: WeightFormula) -> Result<Vec<f64>> {
    let p = model.dim();
    let weighted = kernel == Kernel::Weighted;
    (0..model.distribution.len())
        .map(|s| {
            let x = state_bits(s, p);
            match formula {
                WeightFormula::Standard => selection_probabilities(model, &x, weighted).map(|sel| sel.z()),
                WeightFormula::Tampered => {
                    let mut log_p = Vec::with_capacity(p);
                    for i in 0..p {
                        let (lf, lg) = model.log_pair(i, &x);
                        let eta = if weighted { model.log_eta(i, &x).unwrap_or(0.0) } else { 0.0 };
                        log_p.push(lf - lg + eta);
                    }
                    let l = log_sum_exp(&log_p)?;
                    Ok(if weighted { l } else { l - (p as f64).ln() }.exp())
                }
            }
        })
        .collect()
}

fn reversibility(options: &VerifyOptions) -> Result<(bool, String)> {
    let mut rng = chain_rng(options.seed, 1);
    let mods = [
        BinaryModification::Tempered { beta: 0.3 },
        BinaryModification::Mixed { beta: 0.2, epsilon: 1.0 },
        BinaryModification::Uniform,
    ];
    let (mut db, mut norm, mut freq): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for t in 0..10 {
        let p = 2 + t % 7;
        let dist = random_distribution(&mut rng, p)?;
        let update = if t % 2 == 0 { UpdateRule::Resample } else { UpdateRule::Metropolised };
        let model = BinaryModel::new(dist, mods[t % 3], update, EtaSpec::Inclusion { k: 1.0 })?;
        for kernel in [Kernel::Tempered, Kernel::Weighted] {
            let k = build_kernel(&model, kernel)?;
            let z = runtime_z(&model, kernel, options.weight_formula)?;
            let mass: f64 = k.target.iter().zip(&z).map(|(f, z)| f * z).sum();
            let pi: Vec<f64> = k.target.iter().zip(&z).map(|(f, z)| f * z / mass).collect();
            db = db.max(detailed_balance_residual(&k.transition, &pi));
            let z_kernel = k.z.as_ref().expect("tempered kernel");
            norm = norm.max((k.target.iter().zip(z_kernel).map(|(f, z)| f * z).sum::<f64>() - 1.0).abs());
            if kernel == Kernel::Tempered {
                norm = norm.max((mass - 1.0).abs());
                for fi in &k.index_frequencies {
                    freq = freq.max((fi - 1.0 / p as f64).abs());
                }
            }
        }
    }
    let passed = db <= 1e-12 && norm <= 1e-12 && freq <= 1e-12;
    Ok((passed, format!("detailed balance {db:.3e}, normalisation {norm:.3e}, index frequency {freq:.3e}")))
}

fn bounds(seed: u64, targets: usize) -> Result<(bool, String)> {
    let mut rng = chain_rng(seed, 2);
    let b: f64 = 2.0;
    let (mut var_w, mut sis, mut gs_bound, mut gap_bound): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..targets {
        let p = 3 + t % 4;
        let dist = random_distribution(&mut rng, p)?;
        let model = BinaryModel::new(
            dist,
            BinaryModification::Mixed { beta: 0.1 + 0.2 * (t % 3) as f64, epsilon: b - 1.0 },
            UpdateRule::Resample,
            EtaSpec::Constant,
        )?;
        let tk = build_kernel(&model, Kernel::Tempered)?;
        let gk = build_kernel(&model, Kernel::Gibbs)?;
        var_w = var_w.max(weight_variance_exact(&tk)? / (b - 1.0));
        let gap = generator_gap(tk.jump.as_ref().expect("tempered kernel"), &tk.target)?;
        for _ in 0..20 {
            let h: Vec<f64> = (0..tk.size()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let vf = target_variance(&tk.target, &h);
            let vt = tgs_asymptotic_variance(&tk, &h)?;
            let vg = gibbs_asymptotic_variance(&gk, &h)?;
            sis = sis.max(sis_variance(&tk, &h)? / (b * vf));
            gs_bound = gs_bound.max(vt / (b * b * (vg + vf)));
            gap_bound = gap_bound.max(vt / (2.0 * vf / gap));
        }
    }
    let passed = var_w <= 1.0 && sis <= 1.0 && gs_bound <= 1.0 && gap_bound <= 1.0;
    Ok((
        passed,
        format!("worst ratios to bound: Var(W) {var_w:.3}, SIS {sis:.3}, TGS vs GS {gs_bound:.3}, generator gap {gap_bound:.3}"),
    ))
}

/// Closed-form relaxation quantities of a product target.
pub struct ProductProfile {
    pub alpha1: f64,
    pub alpha2: f64,
    pub s: f64,
    pub q_min: f64,
}

impl ProductProfile {
    pub fn new(q: &[f64]) -> Self {
        let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            alpha1: q_max.max(1.0 - q_min),
            alpha2: q.iter().map(|v| v * (1.0 - v)).fold(0.0, f64::max),
            s: q.iter().sum(),
            q_min,
        }
    }
}

/// Base profile padded with `q = 0.01` up to `p` coordinates.
pub fn padded_profile(base: &[f64], p: usize) -> Vec<f64> {
    let mut q: Vec<f64> = base.iter().copied().take(p).collect();
    q.resize(p, 0.01);
    q
}

/// Coefficient of determination of a least-squares line.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let (slope, intercept) = least_squares(x, y);
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn relaxation_scaling() -> Result<(bool, String)> {
    let profiles: [&[f64]; 3] = [&[0.5, 0.3, 0.8], &[0.4, 0.6], &[0.2, 0.9, 0.5, 0.7]];
    let mut gs_err: f64 = 0.0;
    let mut r2_min: f64 = 1.0;
    let mut constants = Vec::new();
    let mut wtgs_spread: f64 = 1.0;
    for base in profiles {
        let (mut ps, mut ts, mut wt) = (Vec::new(), Vec::new(), Vec::new());
        for p in 2..=8 {
            let q = padded_profile(base, p);
            let dist = enumerate_distribution(&ProductBernoulli::new(q.clone())?, 1 << 8)?;
            let t = relaxation_times(&dist, &RelaxationSpec::default())?;
            let prof = ProductProfile::new(&q);
            gs_err = gs_err.max((t.t_gs() - prof.alpha1 * p as f64).abs() / (prof.alpha1 * p as f64));
            constants.push(t.t_tgs() / (prof.alpha2 * p as f64));
            constants.push(t.t_wtgs() / (prof.s * (1.0 - prof.q_min)));
            // Once padded, q_min is fixed and s grows only by 0.01 per coordinate.
            if p > base.len() {
                ps.push(p as f64);
                ts.push(t.t_tgs());
                wt.push(t.t_wtgs());
            }
        }
        if ps.len() >= 3 {
            r2_min = r2_min.min(r_squared(&ps, &ts));
        }
        // Doubling p within the padded range.
        for (i, p) in ps.iter().enumerate() {
            if let Some(j) = ps.iter().position(|x| *x == 2.0 * p) {
                wtgs_spread = wtgs_spread.max((wt[j] / wt[i]).max(wt[i] / wt[j]));
            }
        }
    }
    let c0 = constants[0];
    let const_dev = constants.iter().map(|c| (c / c0 - 1.0).abs()).fold(0.0, f64::max);
    let passed = gs_err <= 1e-10 && r2_min > 0.999 && wtgs_spread < 1.1 && const_dev < 1e-6;
    Ok((
        passed,
        format!(
            "GS rel. error {gs_err:.2e}, TGS R^2 {r2_min:.6}, wTGS doubling spread {wtgs_spread:.4}, rate constant {c0:.6} (spread {const_dev:.2e})"
        ),
    ))
}

/// Monte Carlo `Var(W) = E_f[1/Z] - 1` and its standard error for i.i.d.
/// standard normals with mixed conditionals.
pub fn gaussian_weight_variance(d: usize, beta: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let model = GaussianModel::new(GaussianTarget::standard(d)?, ModifiedConditionalSpec::mixed(beta))?;
    let mut rng = chain_rng(seed, d as u64);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut x = vec![0.0; d];
    for _ in 0..draws {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let w = selection_probabilities(&model, &x, false)?.log_weight().exp();
        s1 += w;
        s2 += w * w;
    }
    let n = draws as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok((mean - 1.0, (var / n).sqrt()))
}

pub const DECAY_DIMS: [usize; 5] = [2, 8, 32, 128, 256];

fn weight_variance_decay(seed: u64, draws: usize) -> Result<(bool, String)> {
    let est: Vec<(f64, f64)> = DECAY_DIMS
        .iter()
        .map(|d| gaussian_weight_variance(*d, 0.25, draws, seed))
        .collect::<Result<_>>()?;
    let monotone = est
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let last = est.last().expect("dimensions").0;
    let values: Vec<String> = est.iter().map(|(v, _)| format!("{v:.4}")).collect();
    Ok((monotone && last < 0.05, format!("Var(W) over d = {DECAY_DIMS:?}: [{}]", values.join(", "))))
}

fn barker_kernel() -> Result<(bool, String)> {
    let k = gaussian_ar_kernel(0.999, 8.0, 801)?;
    let rows = k.max_row_sum_error();
    let pi = left_stationary(&k.transition)?;
    let stat = pi.iter().zip(&k.stationary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let gap = k.spectral_gap()?;
    let gap1 = gaussian_ar_kernel(1.0, 8.0, 801)?.spectral_gap()?;
    let rel = (gap - gap1).abs() / gap1;
    Ok((
        rows <= 1e-10 && stat <= 1e-8 && rel <= 0.1,
        format!("row error {rows:.2e}, stationarity {stat:.2e}, gap {gap:.5} vs {gap1:.5} at rho = 1"),
    ))
}

/// Largest discrepancy between incrementally maintained conditional logits
/// and a fresh factorisation, over `flips` random flips.
pub fn incremental_discrepancy(seed: u64, flips: usize) -> Result<f64> {
    let sim = simulate_scenario(SimScenario::CorrelatedBlocks, 40, 60, 2.0, seed, DatasetOptions::default())?;
    let mut worst: f64 = 0.0;
    for kind in [PriorKind::GPrior, PriorKind::Independence] {
        let prior = BvsPrior::new(100.0, 0.2, kind)?;
        let mut state = GammaState::empty(&sim.dataset, prior, StateMode::Sweep)?;
        let mut rng = chain_rng(seed, 3);
        let p = sim.dataset.p();
        let (mut inc, mut fresh) = (vec![0.0; p], vec![0.0; p]);
        for t in 0..flips {
            let j = rng.random_range(0..p);
            if state.size() >= 25 && !state.gamma()[j] {
                continue;
            }
            state.flip(j)?;
            if t % 50 == 0 || t + 1 == flips {
                state.conditional_logits(&mut inc);
                let mut scratch = GammaState::new(&sim.dataset, prior, state.gamma().to_vec(), StateMode::Sweep)?;
                scratch.conditional_logits(&mut fresh);
                for (a, b) in inc.iter().zip(&fresh) {
                    worst = worst.max((a - b).abs());
                }
                let direct = log_marginal(state.gamma(), &sim.dataset, &prior)?;
                worst = worst.max((direct - state.log_posterior()).abs());
            }
        }
    }
    Ok(worst)
}

fn cache_consistency(seed: u64, flips: usize) -> Result<(bool, String)> {
    let worst = incremental_discrepancy(seed, flips)?;
    Ok((worst <= 1e-8, format!("max discrepancy {worst:.2e} over {flips} flips per prior")))
}

pub const COLLINEAR_C: [f64; 4] = [10.0, 1e2, 1e3, 1e4];
pub const COLLINEAR_TAIL: [f64; 8] = [0.1, 0.2, 0.05, 0.3, 0.1, 0.15, 0.2, 0.1];

fn collinear_trend() -> Result<(bool, String)> {
    let mut gs = Vec::new();
    let mut wt = Vec::new();
    for c in COLLINEAR_C {
        let target = CollinearStructured::g_prior_shape(2, c, 0.1, 3.0, COLLINEAR_TAIL.to_vec())?;
        let t = relaxation_times(&enumerate_distribution(&target, 1 << 10)?, &RelaxationSpec::default())?;
        gs.push(t.t_gs());
        wt.push(t.t_wtgs());
    }
    let growth = gs.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    let wmax = wt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wmin = wt.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        growth >= 10f64.sqrt() && wmax / wmin < 2.0,
        format!("smallest GS growth per decade {growth:.3}, wTGS range ratio {:.3}", wmax / wmin),
    ))
}

/// Per-iteration CPU seconds of `kernel` at each `p` with about ten active
/// variables, and the log-log slope. Only the step loop is timed.
pub fn cost_profile(kernel: Kernel, seed: u64, ps: &[usize], iters: usize) -> Result<(Vec<f64>, f64)> {
    const ROUNDS: usize = 20;
    let sims = ps
        .iter()
        .map(|&p| {
            simulate_scenario(
                SimScenario::Uncorrelated,
                p,
                100,
                8.0,
                seed,
                DatasetOptions { unit_scale: false, precompute_xtx: Some(true) },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samplers = sims
        .iter()
        .map(|sim| {
            let initial: Vec<bool> = sim.beta.iter().map(|b| *b != 0.0).collect();
            let prior = BvsPrior::benchmark_default(sim.dataset.p());
            BvsSampler::new(&sim.dataset, prior, kernel, DEFAULT_K, false, Some(initial))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rngs: Vec<_> = (0..ps.len()).map(|_| chain_rng(seed, 0)).collect();
    // Interleaved rounds, keeping each size's fastest, so frequency drift on
    // a shared machine does not masquerade as scaling.
    let per_round = iters.div_ceil(ROUNDS);
    let mut per_iter = vec![f64::INFINITY; ps.len()];
    for _ in 0..ROUNDS {
        for (k, sampler) in samplers.iter_mut().enumerate() {
            let start = thread_cpu_time();
            for _ in 0..per_round {
                sampler.step(&mut rngs[k])?;
            }
            let t = (thread_cpu_time() - start).as_secs_f64() / per_round as f64;
            per_iter[k] = per_iter[k].min(t);
        }
    }
    let lx: Vec<f64> = ps.iter().map(|p| (*p as f64).ln()).collect();
    let ly: Vec<f64> = per_iter.iter().map(|t| t.ln()).collect();
    Ok((per_iter.clone(), least_squares(&lx, &ly).0))
}

fn cost_scaling(seed: u64, ps: &[usize]) -> Result<(bool, String)> {
    let (times, slope) = cost_profile(Kernel::Weighted, seed, ps, 20_000)?;
    let shown: Vec<String> = times.iter().map(|t| format!("{t:.2e}")).collect();
    Ok((
        (slope - 1.0).abs() <= 0.15,
        format!("seconds per iteration [{}] at p = {ps:?}, slope {slope:.3}", shown.join(", ")),
    ))
}
