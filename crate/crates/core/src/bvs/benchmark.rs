//! Replicated comparison of GS against TGS and wTGS on one dataset.
//!
//! Candidates report Rao-Blackwell PIPs and GS reports inclusion
//! frequencies. With time matching on, a pilot run fixes the GS iteration
//! count so that a GS replicate costs about as much CPU time as a candidate
//! replicate.

use serde::{Deserialize, Serialize};

use crate::analysis::efficiency::{relative_efficiency, run_replicates, EfficiencyComparison, EfficiencyReport, ReplicateResult};
use crate::bvs::chain::{run_bvs, BvsOptions};
use crate::bvs::data::BvsDataset;
use crate::bvs::marginal::BvsPrior;
use crate::error::{Error, Result};
use crate::sampler::Kernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub prior: BvsPrior,
    pub k: f64,
    /// Candidate iterations including burn-in.
    pub iters: usize,
    pub burn_in: usize,
    pub replicates: usize,
    pub seed: u64,
    pub jobs: usize,
    pub candidates: Vec<Kernel>,
    pub time_matched: bool,
    pub pilot_iters: usize,
}

impl BenchmarkSpec {
    pub fn new(prior: BvsPrior, iters: usize, replicates: usize, seed: u64) -> Self {
        Self {
            prior,
            k: crate::bvs::chain::DEFAULT_K,
            iters,
            burn_in: iters / 10,
            replicates,
            seed,
            jobs: 1,
            candidates: vec![Kernel::Tempered, Kernel::Weighted],
            time_matched: true,
            pilot_iters: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("benchmark needs at least 2 replicates, got {}", self.replicates)));
        }
        if self.candidates.is_empty() || self.candidates.contains(&Kernel::Gibbs) {
            return Err(Error::Config("candidates must be a nonempty subset of {tgs, wtgs}".into()));
        }
        self.prior.validate()?;
        BvsOptions {
            burn_in: self.burn_in,
            k: self.k,
            ..BvsOptions::new(self.iters, self.seed)
        }
        .validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub gs_iters: usize,
    pub gs_burn_in: usize,
    /// Pilot CPU seconds per iteration, GS first then each candidate.
    pub pilot_cost: Vec<(Kernel, f64)>,
    /// GS report first, then one per candidate.
    pub reports: Vec<EfficiencyReport>,
    /// Each candidate against GS.
    pub comparisons: Vec<EfficiencyComparison>,
    pub gs_zero_flip: Vec<usize>,
}

fn per_iteration_cost(data: &BvsDataset, spec: &BenchmarkSpec, kernel: Kernel, iters: usize) -> Result<f64> {
    let opts = BvsOptions {
        burn_in: 0,
        k: spec.k,
        ..BvsOptions::new(iters, spec.seed ^ 0x9e37_79b9)
    };
    let trace = run_bvs(data, spec.prior, kernel, opts, None)?;
    Ok(trace.cpu_seconds / iters as f64)
}

fn stream_of(kernel: Kernel) -> u64 {
    match kernel {
        Kernel::Gibbs => 0,
        Kernel::Tempered => 1,
        Kernel::Weighted => 2,
    }
}

pub fn run_benchmark(data: &BvsDataset, spec: &BenchmarkSpec) -> Result<BenchmarkOutcome> {
    spec.validate()?;
    let mut pilot_cost = Vec::new();
    let (gs_iters, gs_burn_in) = if spec.time_matched {
        // GS steps are much cheaper; give its pilot more iterations.
        let gs_cost = per_iteration_cost(data, spec, Kernel::Gibbs, spec.pilot_iters * 10)?;
        pilot_cost.push((Kernel::Gibbs, gs_cost));
        let mut cand = 0.0;
        for &kernel in &spec.candidates {
            let c = per_iteration_cost(data, spec, kernel, spec.pilot_iters)?;
            pilot_cost.push((kernel, c));
            cand += c / spec.candidates.len() as f64;
        }
        let scale = if gs_cost > 0.0 { cand / gs_cost } else { 1.0 };
        let iters = ((spec.iters as f64 * scale).round() as usize).max(spec.iters);
        (iters, ((spec.burn_in as f64 / spec.iters as f64) * iters as f64).round() as usize)
    } else {
        (spec.iters, spec.burn_in)
    };

    let seeds: Vec<u64> = (0..spec.replicates as u64).map(|r| spec.seed.wrapping_add(r)).collect();
    let mut zero_flip_counts = vec![0usize; data.p()];
    let run = |kernel: Kernel, iters: usize, burn_in: usize| {
        let per_seed = |seed: u64| -> Result<(ReplicateResult, Vec<u64>)> {
            let opts = BvsOptions {
                burn_in,
                stream: stream_of(kernel),
                k: spec.k,
                ..BvsOptions::new(iters, seed)
            };
            let trace = run_bvs(data, spec.prior, kernel, opts, None)?;
            let estimates = trace.best_pips().to_vec();
            Ok((
                ReplicateResult {
                    seed,
                    estimates,
                    seconds: trace.cpu_seconds,
                },
                trace.flips,
            ))
        };
        let flips = std::sync::Mutex::new(Vec::new());
        let results = run_replicates(&seeds, spec.jobs, |seed| {
            let (r, f) = per_seed(seed)?;
            flips.lock().expect("flip lock").push(f);
            Ok(r)
        })?;
        Ok::<_, Error>((results, flips.into_inner().expect("flip lock")))
    };

    let (gs_results, gs_flips) = run(Kernel::Gibbs, gs_iters, gs_burn_in)?;
    for f in &gs_flips {
        for (j, v) in f.iter().enumerate() {
            zero_flip_counts[j] += (*v == 0) as usize;
        }
    }
    let gs = EfficiencyReport::from_replicates(Kernel::Gibbs.name(), &gs_results)?;
    let mut reports = vec![gs];
    let mut comparisons = Vec::new();
    for &kernel in &spec.candidates {
        let (results, _) = run(kernel, spec.iters, spec.burn_in)?;
        let report = EfficiencyReport::from_replicates(kernel.name(), &results)?;
        comparisons.push(relative_efficiency(&reports[0], &report)?);
        reports.push(report);
    }
    Ok(BenchmarkOutcome {
        gs_iters,
        gs_burn_in,
        pilot_cost,
        reports,
        comparisons,
        gs_zero_flip: zero_flip_counts,
    })
}
