use nalgebra::DMatrix;
use tgs_core::bvs::{
    enumerate_posterior, BvsDataset, log_marginal, run_bvs, simulate_scenario, BvsOptions, BvsPrior, DatasetOptions, PriorKind,
    SimScenario,
};
use tgs_core::discrete::{build_kernel, BinaryModel, EtaSpec};
use tgs_core::sampler::Kernel;

const MAX_STATES: usize = 1 << 12;

#[test]
fn gibbs_always_moves_between_equal_models() {
    let x: Vec<f64> = (0..25).map(|t| (t as f64 * 0.7).sin()).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(t, v)| 0.4 * v + (t as f64 * 1.3).cos()).collect();
    let data = BvsDataset::new(DMatrix::from_column_slice(25, 1, &x), y, DatasetOptions::default()).unwrap();
    let even = BvsPrior::new(100.0, 0.5, PriorKind::GPrior).unwrap();
    let diff = log_marginal(&[true], &data, &even).unwrap() - log_marginal(&[false], &data, &even).unwrap();
    // Prior odds that cancel the Bayes factor.
    let h = 1.0 / (1.0 + diff.exp());
    let prior = BvsPrior::new(100.0, h, PriorKind::GPrior).unwrap();
    let lm1 = log_marginal(&[true], &data, &prior).unwrap();
    let lm0 = log_marginal(&[false], &data, &prior).unwrap();
    assert!((lm1 - lm0).abs() < 1e-9);

    let n = 5000;
    let trace = run_bvs(&data, prior, Kernel::Gibbs, BvsOptions::new(n, 11), None).unwrap();
    assert_eq!(trace.flips[0], n as u64);
    assert!((trace.pip_frequency[0] - 0.5).abs() < 1e-3);
}

#[test]
fn weighted_update_frequencies_mix_pips_and_uniform() {
    let p = 6;
    let sim = simulate_scenario(SimScenario::CorrelatedBlocks, p, 40, 3.0, 5, DatasetOptions::default()).unwrap();
    let prior = BvsPrior::new(100.0, 0.3, PriorKind::GPrior).unwrap();
    let k = 2.0;
    let table = enumerate_posterior(&sim.dataset, prior, MAX_STATES).unwrap();
    let pips = table.marginals();
    let s: f64 = pips.iter().sum();
    let alpha = s / (k + s);
    let formula: Vec<f64> = pips.iter().map(|q| alpha * q / s + (1.0 - alpha) / p as f64).collect();

    let model = BinaryModel::flip(table, EtaSpec::Inclusion { k });
    let exact = build_kernel(&model, Kernel::Weighted).unwrap().index_frequencies;
    for (a, b) in exact.iter().zip(&formula) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    let n = 1_000_000;
    let opts = BvsOptions { burn_in: 0, k, ..BvsOptions::new(n, 21) };
    let trace = run_bvs(&sim.dataset, prior, Kernel::Weighted, opts, None).unwrap();
    for (j, (c, f)) in trace.selections.iter().zip(&formula).enumerate() {
        let freq = *c as f64 / n as f64;
        assert!((freq - f).abs() < 1e-3, "variable {j}: {freq} vs {f}");
    }
}

#[test]
fn both_estimators_converge_on_twelve_variables() {
    let p = 12;
    let sim = simulate_scenario(SimScenario::CorrelatedBlocks, p, 40, 2.0, 8, DatasetOptions::default()).unwrap();
    let prior = BvsPrior::new(1e3, 0.25, PriorKind::GPrior).unwrap();
    let exact = enumerate_posterior(&sim.dataset, prior, MAX_STATES).unwrap().marginals();
    for (kernel, seed) in [(Kernel::Tempered, 1), (Kernel::Weighted, 2)] {
        let trace = run_bvs(&sim.dataset, prior, kernel, BvsOptions::new(100_000, seed), None).unwrap();
        let rb = trace.rao_blackwell_pips().unwrap();
        for j in 0..p {
            assert!((rb[j] - exact[j]).abs() < 0.02, "{kernel} RB {j}: {} vs {}", rb[j], exact[j]);
            let fr = trace.pip_frequency[j];
            assert!((fr - exact[j]).abs() < 0.05, "{kernel} frequency {j}: {fr} vs {}", exact[j]);
        }
    }
}
