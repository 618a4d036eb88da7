//! Resolved run configuration: command-line flags over an optional JSON
//! file over defaults. The resolved form is written beside every output.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tgs_core::bvs::{BvsPrior, DatasetOptions, PriorKind, DEFAULT_K};
use tgs_core::sampler::Kernel;

pub const SEED_ENV: &str = "TGS_DEFAULT_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Scenario {
        scenario: u8,
        p: usize,
        n: usize,
        snr: f64,
        data_seed: u64,
    },
    Csv {
        x: PathBuf,
        y: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub data: DataSpec,
    pub unit_scale: bool,
    pub kernel: Kernel,
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub prior: BvsPrior,
    pub k: f64,
    pub thin: usize,
    pub gs_rao_blackwell: bool,
    pub replicates: usize,
    pub jobs: usize,
    pub time_matched: bool,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            unit_scale: self.unit_scale,
            precompute_xtx: None,
        }
    }
}

/// Everything a config file may set; all keys optional, unknown keys rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<String>,
    pub data: Option<DataSpec>,
    pub scenario: Option<u8>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub snr: Option<f64>,
    pub data_seed: Option<u64>,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub unit_scale: Option<bool>,
    pub kernel: Option<Kernel>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub prior: Option<BvsPrior>,
    pub c: Option<f64>,
    pub h: Option<f64>,
    pub prior_kind: Option<PriorKind>,
    pub k: Option<f64>,
    pub thin: Option<usize>,
    pub gs_rao_blackwell: Option<bool>,
    pub replicates: Option<usize>,
    pub jobs: Option<usize>,
    pub time_matched: Option<bool>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Field-wise `self` over `base`.
    pub fn over(self, base: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            command, data, scenario, p, n, snr, data_seed, x, y, unit_scale, kernel, iters, burn_in, seed, prior, c, h,
            prior_kind, k, thin, gs_rao_blackwell, replicates, jobs, time_matched, out
        )
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got `{v}`")),
        Err(_) => Ok(None),
    }
}

pub struct Defaults {
    pub kernel: Kernel,
    pub iters: usize,
    pub replicates: usize,
}

/// Merges `layers` (flags over file) with defaults.
pub fn resolve(command: &str, layers: ConfigFile, defaults: Defaults) -> Result<RunConfig> {
    if let Some(c) = &layers.command {
        if c != command {
            bail!("config file is for `{c}`, not `{command}`");
        }
    }
    let data = match (&layers.x, &layers.y, layers.scenario, layers.data.clone()) {
        (Some(x), Some(y), None, _) => DataSpec::Csv { x: x.clone(), y: y.clone() },
        (Some(_), None, _, _) | (None, Some(_), _, _) => bail!("--x and --y must be given together"),
        (Some(_), Some(_), Some(_), _) => bail!("give either --scenario or --x/--y, not both"),
        (None, None, Some(scenario), _) => DataSpec::Scenario {
            scenario,
            p: layers.p.unwrap_or(100),
            n: layers.n.unwrap_or(100),
            snr: layers.snr.unwrap_or(3.0),
            data_seed: layers.data_seed.unwrap_or(DEFAULT_SEED),
        },
        (None, None, None, Some(d)) => d,
        (None, None, None, None) => bail!("no data: pass --scenario or --x/--y"),
    };
    let p = match &data {
        DataSpec::Scenario { p, .. } => Some(*p),
        DataSpec::Csv { .. } => None,
    };
    let iters = layers.iters.unwrap_or(defaults.iters);
    let seed = match layers.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(DEFAULT_SEED),
    };
    let prior = match layers.prior {
        Some(prior) if layers.c.is_none() && layers.h.is_none() && layers.prior_kind.is_none() => prior,
        base => {
            let base = base.unwrap_or(BvsPrior {
                c: 1e3,
                h: f64::NAN,
                kind: PriorKind::GPrior,
            });
            BvsPrior {
                c: layers.c.unwrap_or(base.c),
                h: layers.h.unwrap_or(base.h),
                kind: layers.prior_kind.unwrap_or(base.kind),
            }
        }
    };
    let config = RunConfig {
        command: command.into(),
        data,
        unit_scale: layers.unit_scale.unwrap_or(false),
        kernel: layers.kernel.unwrap_or(defaults.kernel),
        iters,
        burn_in: layers.burn_in.unwrap_or(iters / 10),
        seed,
        prior,
        k: layers.k.unwrap_or(DEFAULT_K),
        thin: layers.thin.unwrap_or(0),
        gs_rao_blackwell: layers.gs_rao_blackwell.unwrap_or(false),
        replicates: layers.replicates.unwrap_or(defaults.replicates),
        jobs: layers.jobs.unwrap_or(1).max(1),
        time_matched: layers.time_matched.unwrap_or(true),
        out: layers.out.unwrap_or_else(|| PathBuf::from("tgs-out")),
    };
    Ok(with_default_h(config, p))
}

/// `h = 5/p` (capped at 1/2) when unset; for CSV data `p` is known only
/// after loading, see [`fill_h`].
fn with_default_h(mut config: RunConfig, p: Option<usize>) -> RunConfig {
    if config.prior.h.is_nan() {
        if let Some(p) = p {
            config.prior.h = BvsPrior::benchmark_default(p).h;
        }
    }
    config
}

pub fn fill_h(config: &mut RunConfig, p: usize) {
    if config.prior.h.is_nan() {
        config.prior.h = BvsPrior::benchmark_default(p).h;
    }
}
