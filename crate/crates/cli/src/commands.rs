use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use tgs_core::analysis::efficiency::Ratio;
use tgs_core::bvs::{
    enumerate_posterior, load_dataset, run_benchmark, run_bvs, simulate_scenario, write_dataset_csv, BenchmarkSpec,
    BvsDataset, BvsOptions, BvsPrior, SimScenario,
};
use tgs_core::checks::{run_checks, Level, VerifyOptions, WeightFormula};
use tgs_core::discrete::write_table_csv;
use tgs_core::gaussian::{export_covariance_csv, scenario_covariance};
use tgs_core::io::fmt_real;
use tgs_core::sampler::Kernel;

use crate::config::{fill_h, resolve, ConfigFile, DataSpec, Defaults, RunConfig};
use crate::ExportArgs;

/// Largest `p` the export command will enumerate.
const MAX_EXPORT_P: usize = 20;

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(config: &mut RunConfig) -> Result<BvsDataset> {
    let data = match &config.data {
        DataSpec::Scenario {
            scenario,
            p,
            n,
            snr,
            data_seed,
        } => {
            let kind = SimScenario::from_number(*scenario)?;
            simulate_scenario(kind, *p, *n, *snr, *data_seed, config.dataset_options())?.dataset
        }
        DataSpec::Csv { x, y } => load_dataset(x, y, config.dataset_options())?,
    };
    for w in data.warnings() {
        eprintln!("warning: {w}");
    }
    fill_h(config, data.p());
    config.prior.validate()?;
    Ok(data)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

pub fn sample(layers: ConfigFile) -> Result<bool> {
    let mut config = resolve(
        "sample",
        layers,
        Defaults {
            kernel: Kernel::Weighted,
            iters: 30_000,
            replicates: 1,
        },
    )?;
    let data = load_data(&mut config)?;
    prepare_out(&config.out)?;
    write_json(&config.out.join("config.json"), &config)?;

    let options = BvsOptions {
        burn_in: config.burn_in,
        k: config.k,
        thin: config.thin,
        gs_rao_blackwell: config.gs_rao_blackwell,
        ..BvsOptions::new(config.iters, config.seed)
    };
    let trace = run_bvs(&data, config.prior, config.kernel, options, None)?;

    let mut w = csv_writer(&config.out.join("pips.csv"))?;
    w.write_record(["index", "frequency", "rao_blackwell"])?;
    for j in 0..data.p() {
        let rb = trace.pip_rao_blackwell.as_ref().map(|v| fmt_real(v[j])).unwrap_or_default();
        w.write_record([(j + 1).to_string(), fmt_real(trace.pip_frequency[j]), rb])?;
    }
    w.flush()?;

    if config.thin > 0 {
        let mut w = csv_writer(&config.out.join("trace.csv"))?;
        w.write_record(["iteration", "variable", "estimate", "algorithm"])?;
        for r in &trace.running {
            let (values, label) = match &r.rao_blackwell {
                Some(rb) => (rb, format!("{}_rb", config.kernel.name())),
                None => (&r.frequency, config.kernel.name().to_string()),
            };
            for (j, v) in values.iter().enumerate() {
                w.write_record([r.iteration.to_string(), (j + 1).to_string(), fmt_real(*v), label.clone()])?;
            }
        }
        w.flush()?;
    }

    // Everything here is a function of the resolved config; timings live in
    // timing.json so reruns reproduce this file exactly.
    let summary = json!({
        "kernel": config.kernel,
        "p": data.p(),
        "n": data.n(),
        "iterations": trace.n_iters,
        "burn_in": trace.burn_in,
        "weight_variance": trace.weight_variance,
        "max_log_weight": trace.max_log_weight,
        "mean_model_size": trace.mean_model_size,
        "flips": trace.flips,
        "selections": trace.selections,
        "fallbacks": trace.fallbacks,
        "clamps": trace.clamps,
        "final_model": trace.final_gamma.iter().enumerate().filter(|(_, &g)| g).map(|(j, _)| j + 1).collect::<Vec<_>>(),
    });
    write_json(&config.out.join("summary.json"), &summary)?;
    write_json(
        &config.out.join("timing.json"),
        &json!({ "cpu_seconds": trace.cpu_seconds, "seconds_per_iteration": trace.cpu_seconds / trace.n_iters as f64 }),
    )?;
    Ok(true)
}

fn ratio_fields(r: Ratio) -> (String, &'static str) {
    match r {
        Ratio::Value(v) => (fmt_real(v), "false"),
        Ratio::Censored => (String::new(), "true"),
    }
}

pub fn benchmark(layers: ConfigFile) -> Result<bool> {
    let mut config = resolve(
        "benchmark",
        layers,
        Defaults {
            kernel: Kernel::Weighted,
            iters: 35_000,
            replicates: 50,
        },
    )?;
    let data = load_data(&mut config)?;
    prepare_out(&config.out)?;
    write_json(&config.out.join("config.json"), &config)?;

    let spec = BenchmarkSpec {
        k: config.k,
        burn_in: config.burn_in,
        jobs: config.jobs,
        time_matched: config.time_matched,
        ..BenchmarkSpec::new(config.prior, config.iters, config.replicates, config.seed)
    };
    let outcome = run_benchmark(&data, &spec)?;
    let gs = &outcome.reports[0];

    let mut w = csv_writer(&config.out.join("efficiency.csv"))?;
    w.write_record([
        "index",
        "candidate",
        "gs_mean",
        "gs_variance",
        "candidate_mean",
        "candidate_variance",
        "ratio",
        "censored",
        "gs_zero_flip_replicates",
    ])?;
    for (cmp, report) in outcome.comparisons.iter().zip(&outcome.reports[1..]) {
        for j in 0..data.p() {
            let (ratio, censored) = ratio_fields(cmp.ratios[j]);
            w.write_record([
                (j + 1).to_string(),
                cmp.candidate.clone(),
                fmt_real(gs.means[j]),
                fmt_real(gs.variances[j]),
                fmt_real(report.means[j]),
                fmt_real(report.variances[j]),
                ratio,
                censored.to_string(),
                outcome.gs_zero_flip[j].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let comparisons: Vec<_> = outcome
        .comparisons
        .iter()
        .map(|c| {
            json!({
                "candidate": c.candidate,
                "baseline": c.baseline,
                "median": c.median,
                "median_uncensored": c.median_uncensored,
                "mean_above_threshold": c.mean_above_threshold,
                "min_above_threshold": c.min_above_threshold,
                "threshold": c.threshold,
                "censored": c.censored,
            })
        })
        .collect();
    let summary = json!({
        "p": data.p(),
        "n": data.n(),
        "replicates": config.replicates,
        "candidate_iterations": config.iters,
        "candidate_burn_in": config.burn_in,
        "gs_iterations": outcome.gs_iters,
        "gs_burn_in": outcome.gs_burn_in,
        "time_matched": config.time_matched,
        "comparisons": comparisons,
    });
    write_json(&config.out.join("summary.json"), &summary)?;
    let timing = json!({
        "pilot_seconds_per_iteration": outcome.pilot_cost.iter().map(|(k, c)| json!({"kernel": k, "seconds": c})).collect::<Vec<_>>(),
        "median_replicate_seconds": outcome.reports.iter().map(|r| json!({"algorithm": r.algorithm, "seconds": r.median_time()})).collect::<Vec<_>>(),
    });
    write_json(&config.out.join("timing.json"), &timing)?;

    for c in &outcome.comparisons {
        println!(
            "{} vs {}: median {:.3e}, mean over PIP>{} {}, censored {}",
            c.candidate,
            c.baseline,
            c.median,
            c.threshold,
            c.mean_above_threshold.map_or("n/a".into(), |v| format!("{v:.3e}")),
            c.censored
        );
    }
    Ok(true)
}

pub fn verify(level: Level, tamper: bool, out: Option<PathBuf>) -> Result<bool> {
    let options = VerifyOptions {
        weight_formula: if tamper { WeightFormula::Tampered } else { WeightFormula::Standard },
        ..VerifyOptions::new(level)
    };
    let results = run_checks(&options);
    let mut file = match &out {
        Some(path) => Some(fs::File::create(path).with_context(|| format!("writing {}", path.display()))?),
        None => None,
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for r in &results {
        let line = serde_json::to_string(r)?;
        writeln!(lock, "{line}")?;
        if let Some(f) = file.as_mut() {
            writeln!(f, "{line}")?;
        }
    }
    Ok(results.iter().all(|r| r.passed))
}

pub fn export(args: ExportArgs) -> Result<bool> {
    prepare_out(&args.out)?;
    let mut wrote = false;
    if let Some(number) = args.scenario {
        let kind = SimScenario::from_number(number)?;
        let sim = simulate_scenario(kind, args.p, args.n, args.snr, args.data_seed, Default::default())?;
        write_dataset_csv(&args.out.join("x.csv"), &args.out.join("y.csv"), &sim.x_raw, &sim.y_raw)?;
        let mut w = csv_writer(&args.out.join("beta.csv"))?;
        w.write_record(["index", "beta"])?;
        for (j, b) in sim.beta.iter().enumerate() {
            w.write_record([(j + 1).to_string(), fmt_real(*b)])?;
        }
        w.flush()?;
        if args.posterior {
            let h = args.h.unwrap_or(BvsPrior::benchmark_default(args.p).h);
            let prior = BvsPrior::new(args.c, h, args.prior)?;
            let table = enumerate_posterior(&sim.dataset, prior, 1 << MAX_EXPORT_P)?;
            write_table_csv(&args.out.join("posterior.csv"), &table)?;
            let mut w = csv_writer(&args.out.join("posterior_pips.csv"))?;
            w.write_record(["index", "pip"])?;
            for (j, v) in table.marginals().iter().enumerate() {
                w.write_record([(j + 1).to_string(), fmt_real(*v)])?;
            }
            w.flush()?;
        }
        wrote = true;
    } else if args.posterior {
        anyhow::bail!("--posterior needs --scenario");
    }
    if let Some(kind) = args.gaussian {
        let cov = scenario_covariance(kind, args.dim, args.rho)?;
        export_covariance_csv(&args.out.join("covariance.csv"), &cov)?;
        wrote = true;
    }
    if !wrote {
        anyhow::bail!("nothing to export: pass --scenario and/or --gaussian");
    }
    Ok(true)
}
