use proptest::prelude::*;
use tgs_core::discrete::{
    build_kernel, enumerate_distribution, state_bits, BinaryDistribution, BinaryModel, BinaryModification, EtaSpec,
    ProductBernoulli, UpdateRule,
};
use tgs_core::sampler::{run_chain, selection_probabilities, Kernel, RunOptions};

fn distribution() -> impl Strategy<Value = BinaryDistribution> {
    (1usize..=5).prop_flat_map(|p| {
        prop::collection::vec(-4.0f64..4.0, 1 << p)
            .prop_map(move |lw| BinaryDistribution::from_log_weights(p, lw).unwrap())
    })
}

fn modification() -> impl Strategy<Value = BinaryModification> {
    prop_oneof![
        Just(BinaryModification::Uniform),
        (0.05f64..1.0).prop_map(|beta| BinaryModification::Tempered { beta }),
        (0.05f64..1.0, 0.1f64..3.0).prop_map(|(beta, epsilon)| BinaryModification::Mixed { beta, epsilon }),
    ]
}

fn bits(s: usize, p: usize) -> Vec<u8> {
    state_bits(s, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_reversible_wrt_f_z(d in distribution(), m in modification(), k in 0.0f64..3.0) {
        let model = BinaryModel::new(d, m, UpdateRule::Metropolised, EtaSpec::Inclusion { k }).unwrap();
        for kernel in [Kernel::Gibbs, Kernel::Tempered, Kernel::Weighted] {
            let km = build_kernel(&model, kernel).unwrap();
            prop_assert!(km.detailed_balance_residual() < 1e-12);
            prop_assert!(km.max_row_sum_error() < 1e-12);
            if let Some(z) = &km.z {
                let total: f64 = z.iter().zip(&km.target).map(|(z, f)| z * f).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
        let tgs = build_kernel(&model, Kernel::Tempered).unwrap();
        let d = model.distribution.p() as f64;
        for freq in &tgs.index_frequencies {
            prop_assert!((freq - 1.0 / d).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_never_exceed_the_ratio_bound(d in distribution(), beta in 0.05f64..1.0, epsilon in 0.1f64..3.0) {
        let m = BinaryModification::Mixed { beta, epsilon };
        let b = m.ratio_bound().unwrap();
        let model = BinaryModel::new(d, m, UpdateRule::Resample, EtaSpec::Constant).unwrap();
        let p = model.distribution.p();
        for s in 0..model.distribution.len() {
            let sel = selection_probabilities(&model, &bits(s, p), false).unwrap();
            prop_assert!(sel.log_weight() <= b.ln() + 1e-12);
        }
    }

    #[test]
    fn weighted_selection_is_strictly_positive(d in distribution(), k in 1e-3f64..5.0) {
        let model = BinaryModel::flip(d, EtaSpec::Inclusion { k });
        let p = model.distribution.p();
        for s in 0..model.distribution.len() {
            let sel = selection_probabilities(&model, &bits(s, p), true).unwrap();
            prop_assert!(sel.probabilities().iter().all(|v| *v > 0.0));
            let total: f64 = sel.normalized().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_modification_reduces_to_gibbs(d in distribution(), seed in any::<u64>()) {
        let model = BinaryModel::new(d, BinaryModification::Identity, UpdateRule::Resample, EtaSpec::Constant).unwrap();
        let opts = RunOptions::new(400, seed).with_burn_in(0);
        let tgs = run_chain(&model, Kernel::Tempered, opts, None).unwrap();
        let gs = run_chain(&model, Kernel::Gibbs, opts, None).unwrap();
        prop_assert_eq!(tgs.samples.len(), gs.samples.len());
        for (a, b) in tgs.samples.iter().zip(&gs.samples) {
            prop_assert_eq!(&a.state, &b.state);
            prop_assert_eq!(a.index, b.index);
            prop_assert_eq!(a.log_weight, 0.0);
            prop_assert_eq!(b.log_weight, 0.0);
        }
        let kt = build_kernel(&model, Kernel::Tempered).unwrap();
        let kg = build_kernel(&model, Kernel::Gibbs).unwrap();
        prop_assert!((kt.transition - kg.transition).amax() < 1e-15);
    }

    #[test]
    fn rao_blackwell_is_exact_on_product_targets(
        q in prop::collection::vec(0.02f64..0.98, 1..6),
        seed in any::<u64>(),
        kernel in prop_oneof![Just(Kernel::Tempered), Just(Kernel::Weighted)],
    ) {
        let d = enumerate_distribution(&ProductBernoulli::new(q.clone()).unwrap(), 1 << 10).unwrap();
        let model = BinaryModel::flip(d, EtaSpec::Inclusion { k: 1.0 });
        // A single retained iteration already gives the exact marginals.
        let trace = run_chain(&model, kernel, RunOptions::new(1, seed).with_burn_in(0), None).unwrap();
        let rb = trace.rao_blackwell().unwrap();
        for (r, q) in rb.iter().zip(&q) {
            prop_assert!((r - q).abs() < 1e-12, "{} vs {}", r, q);
        }
    }
}
