//! Replicate-based variance estimates and time-adjusted relative efficiency.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One replicate's estimates and its cost in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub seconds: f64,
}

/// Across-replicate summary of one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub algorithm: String,
    /// Mean estimate per function.
    pub means: Vec<f64>,
    /// Unbiased sample variance per function.
    pub variances: Vec<f64>,
    /// Cost of each replicate.
    pub times: Vec<f64>,
    pub replicates: usize,
}

impl EfficiencyReport {
    pub fn from_replicates(algorithm: impl Into<String>, results: &[ReplicateResult]) -> Result<Self> {
        let r = results.len();
        if r < 2 {
            return Err(Error::Config(format!("variance estimation needs at least 2 replicates, got {r}")));
        }
        let m = results[0].estimates.len();
        if results.iter().any(|x| x.estimates.len() != m) {
            return Err(Error::Config("replicates disagree on the number of functions".into()));
        }
        let mut means = vec![0.0; m];
        for x in results {
            for (acc, v) in means.iter_mut().zip(&x.estimates) {
                *acc += v / r as f64;
            }
        }
        let mut variances = vec![0.0; m];
        for x in results {
            for ((acc, v), mu) in variances.iter_mut().zip(&x.estimates).zip(&means) {
                *acc += (v - mu) * (v - mu) / (r - 1) as f64;
            }
        }
        Ok(Self {
            algorithm: algorithm.into(),
            means,
            variances,
            times: results.iter().map(|x| x.seconds).collect(),
            replicates: r,
        })
    }

    pub fn median_time(&self) -> f64 {
        median(&self.times)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `run(seed)` for `seeds` on up to `jobs` threads and returns results
/// in seed order. The first failure aborts and reports its seed.
pub fn run_replicates<F>(seeds: &[u64], jobs: usize, run: F) -> Result<Vec<ReplicateResult>>
where
    F: Fn(u64) -> Result<ReplicateResult> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ReplicateResult>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(seeds.len().max(1)) {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let out = run(seeds[i]);
                if out.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("replicate slot lock")[i] = Some(out);
            });
        }
    });
    let mut results = Vec::with_capacity(seeds.len());
    for (slot, seed) in slots.into_inner().expect("replicate slot lock").into_iter().zip(seeds) {
        match slot {
            Some(Ok(r)) => results.push(r),
            Some(Err(e)) => {
                return Err(Error::Replicate {
                    seed: *seed,
                    source: Box::new(e),
                })
            }
            None => {}
        }
    }
    Ok(results)
}

/// Replicate sweep followed by the variance summary.
pub fn replicate_variance<F>(algorithm: &str, seeds: &[u64], jobs: usize, run: F) -> Result<EfficiencyReport>
where
    F: Fn(u64) -> Result<ReplicateResult> + Sync,
{
    if seeds.len() < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {}", seeds.len())));
    }
    let results = run_replicates(seeds, jobs, run)?;
    EfficiencyReport::from_replicates(algorithm, &results)
}

/// A per-function efficiency ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Ratio {
    Value(f64),
    /// Undefined because one of the variances is zero or not finite, as
    /// happens when the baseline never moves a variable.
    Censored,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Censored => None,
        }
    }

    /// Censored ratios rank above every value.
    fn sort_key(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyComparison {
    pub baseline: String,
    pub candidate: String,
    pub ratios: Vec<Ratio>,
    /// Median over all functions, censored ratios counted as `+inf`.
    pub median: f64,
    /// Median over uncensored ratios only.
    pub median_uncensored: Option<f64>,
    /// Mean over uncensored ratios of functions whose mean estimate exceeds
    /// `threshold` under either algorithm.
    pub mean_above_threshold: Option<f64>,
    pub min_above_threshold: Option<f64>,
    pub threshold: f64,
    pub censored: usize,
}

pub const PIP_THRESHOLD: f64 = 0.05;

/// `(sigma^2_base T_base) / (sigma^2_cand T_cand)` per function, with
/// median replicate times as `T`.
pub fn relative_efficiency(baseline: &EfficiencyReport, candidate: &EfficiencyReport) -> Result<EfficiencyComparison> {
    relative_efficiency_with(baseline, candidate, PIP_THRESHOLD)
}

pub fn relative_efficiency_with(
    baseline: &EfficiencyReport,
    candidate: &EfficiencyReport,
    threshold: f64,
) -> Result<EfficiencyComparison> {
    if baseline.variances.len() != candidate.variances.len() {
        return Err(Error::Config(format!(
            "reports cover {} and {} functions",
            baseline.variances.len(),
            candidate.variances.len()
        )));
    }
    let tb = baseline.median_time();
    let tc = candidate.median_time();
    let ratios: Vec<Ratio> = baseline
        .variances
        .iter()
        .zip(&candidate.variances)
        .map(|(vb, vc)| {
            let r = (vb * tb) / (vc * tc);
            if *vb > 0.0 && *vc > 0.0 && r.is_finite() && r > 0.0 {
                Ratio::Value(r)
            } else {
                Ratio::Censored
            }
        })
        .collect();
    let all: Vec<f64> = ratios.iter().map(|r| r.sort_key()).collect();
    let finite: Vec<f64> = ratios.iter().filter_map(|r| r.value()).collect();
    let selected: Vec<f64> = ratios
        .iter()
        .enumerate()
        .filter(|(j, _)| baseline.means[*j] > threshold || candidate.means[*j] > threshold)
        .filter_map(|(_, r)| r.value())
        .collect();
    Ok(EfficiencyComparison {
        baseline: baseline.algorithm.clone(),
        candidate: candidate.algorithm.clone(),
        median: median(&all),
        median_uncensored: (!finite.is_empty()).then(|| median(&finite)),
        mean_above_threshold: (!selected.is_empty()).then(|| selected.iter().sum::<f64>() / selected.len() as f64),
        min_above_threshold: selected.iter().copied().reduce(f64::min),
        threshold,
        censored: ratios.iter().filter(|r| **r == Ratio::Censored).count(),
        ratios,
    })
}

/// Single-chain batch-means estimate of the asymptotic variance.
pub fn batch_means_variance(values: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || values.len() < 2 * batches {
        return Err(Error::Config(format!(
            "{} values cannot form {batches} batches",
            values.len()
        )));
    }
    let b = values.len() / batches;
    let means: Vec<f64> = values
        .chunks_exact(b)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let s2 = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
    Ok(b as f64 * s2)
}
