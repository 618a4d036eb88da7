mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tgs_core::bvs::PriorKind;
use tgs_core::checks::Level;
use tgs_core::gaussian::Scenario;
use tgs_core::sampler::Kernel;

use crate::config::ConfigFile;

#[derive(Parser)]
#[command(name = "tgs", version, about = "Tempered Gibbs sampling for variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and write PIP estimates.
    Sample(RunArgs),
    /// Replicated efficiency comparison of TGS and wTGS against GS.
    Benchmark(RunArgs),
    /// Check the theory suite; exits nonzero if any property fails.
    Verify {
        #[arg(long, default_value = "fast")]
        level: Level,
        /// Use a deliberately wrong weight formula (negative control).
        #[arg(long)]
        tamper: bool,
        /// Also write the results to this JSON-lines file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write simulated data, an enumerated posterior or a Gaussian covariance.
    Export(ExportArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulation scenario (1, 2 or 3).
    #[arg(long, conflicts_with_all = ["x", "y"])]
    scenario: Option<u8>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Design matrix CSV (header row, one column per predictor).
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    /// Response CSV (header row, one column).
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Scale centred columns to unit norm.
    #[arg(long)]
    unit_scale: bool,
    #[arg(long)]
    kernel: Option<Kernel>,
    /// Iterations including burn-in.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long = "burnin")]
    burn_in: Option<usize>,
    /// Falls back to the config file, then TGS_DEFAULT_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    k: Option<f64>,
    /// Record running estimates every this many iterations (0 = off).
    #[arg(long)]
    thin: Option<usize>,
    /// Rao-Blackwellize GS as well.
    #[arg(long)]
    gs_rb: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Run GS for the candidates' iteration count instead of their CPU time.
    #[arg(long)]
    no_time_match: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn layers(&self) -> anyhow::Result<ConfigFile> {
        let flags = ConfigFile {
            scenario: self.scenario,
            p: self.p,
            n: self.n,
            snr: self.snr,
            data_seed: self.data_seed,
            x: self.x.clone(),
            y: self.y.clone(),
            unit_scale: self.unit_scale.then_some(true),
            kernel: self.kernel,
            iters: self.iters,
            burn_in: self.burn_in,
            seed: self.seed,
            c: self.c,
            h: self.h,
            prior_kind: self.prior,
            k: self.k,
            thin: self.thin,
            gs_rao_blackwell: self.gs_rb.then_some(true),
            replicates: self.replicates,
            jobs: self.jobs,
            time_matched: self.no_time_match.then_some(false),
            out: self.out.clone(),
            ..Default::default()
        };
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        // Flag-level data choice replaces whatever the file said.
        let file = if flags.scenario.is_some() || flags.x.is_some() {
            ConfigFile { data: None, ..file }
        } else {
            file
        };
        Ok(flags.over(file))
    }
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    out: PathBuf,
    /// Simulate and write x.csv, y.csv and beta.csv for this scenario.
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    data_seed: u64,
    /// Also enumerate the posterior (small p only) into posterior.csv.
    #[arg(long)]
    posterior: bool,
    #[arg(long, default_value_t = 1e3)]
    c: f64,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value = "gprior")]
    prior: PriorKind,
    /// Write covariance.csv for a Gaussian scenario.
    #[arg(long)]
    gaussian: Option<Scenario>,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(args) => args.layers().and_then(commands::sample),
        Command::Benchmark(args) => args.layers().and_then(commands::benchmark),
        Command::Verify { level, tamper, out } => commands::verify(level, tamper, out),
        Command::Export(args) => commands::export(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
