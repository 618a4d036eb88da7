//! Bayesian variable selection: the posterior over inclusion vectors and the
//! samplers specialised to it.

pub mod benchmark;
pub mod chain;
pub mod data;
pub mod marginal;
pub mod state;

pub use benchmark::{run_benchmark, BenchmarkOutcome, BenchmarkSpec};
pub use chain::{run_bvs, BvsOptions, BvsSampler, BvsTrace, RunningEstimate, DEFAULT_K};
pub use data::{load_dataset, write_dataset_csv, simulate_scenario, BvsDataset, DatasetOptions, SimScenario, SimulatedData};
pub use marginal::{log_marginal, BvsPrior, PriorKind};
pub use state::{GammaState, StateMode};

use crate::discrete::{enumerate_distribution, state_bits, BinaryDistribution, Enumerable};
use crate::error::{Error, Result};

/// The posterior `p(gamma | Y)` as an enumerable target. Rank-deficient
/// g-prior models get zero mass.
pub struct BvsPosterior<'a> {
    pub data: &'a BvsDataset,
    pub prior: BvsPrior,
}

impl Enumerable for BvsPosterior<'_> {
    fn num_coordinates(&self) -> usize {
        self.data.p()
    }

    fn log_weight(&self, state: usize) -> f64 {
        let gamma: Vec<bool> = state_bits(state, self.data.p()).into_iter().map(|b| b == 1).collect();
        match log_marginal(&gamma, self.data, &self.prior) {
            Ok(v) => v,
            Err(Error::SingularModel { .. }) => f64::NEG_INFINITY,
            Err(_) => f64::NAN,
        }
    }
}

/// Exact posterior table by enumerating all `2^p` models.
pub fn enumerate_posterior(data: &BvsDataset, prior: BvsPrior, max_states: usize) -> Result<BinaryDistribution> {
    let table = enumerate_distribution(&BvsPosterior { data, prior }, max_states)?;
    if let Some(s) = (0..table.len()).find(|&s| table.log_prob(s).is_nan()) {
        return Err(Error::Conditioning {
            gamma: state_bits(s, data.p())
                .iter()
                .enumerate()
                .filter(|(_, b)| **b == 1)
                .map(|(i, _)| i)
                .collect(),
        });
    }
    Ok(table)
}

/// Rao-Blackwell PIP estimates of a finished run.
pub fn rao_blackwell_pips(trace: &BvsTrace) -> Result<Vec<f64>> {
    trace.rao_blackwell_pips().map(<[f64]>::to_vec)
}
