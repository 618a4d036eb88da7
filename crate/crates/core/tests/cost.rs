//! Timing measurements; kept in their own binary so they run alone.

use tgs_core::checks::cost_profile;
use tgs_core::sampler::Kernel;

const PS: [usize; 4] = [250, 500, 1000, 2000];

#[test]
fn gibbs_step_cost_is_flat_in_p() {
    let (times, slope) = cost_profile(Kernel::Gibbs, 3, &PS, 1_000_000).unwrap();
    assert!(slope < 0.2, "seconds per iteration {times:?}, slope {slope}");
}

#[test]
fn weighted_step_cost_is_linear_in_p() {
    let (times, slope) = cost_profile(Kernel::Weighted, 3, &PS, 20_000).unwrap();
    assert!((slope - 1.0).abs() <= 0.15, "seconds per iteration {times:?}, slope {slope}");
}
