//! Exact spectral and variance computations on enumerated chains, the Barker
//! grid chain, and replicate-based efficiency comparisons.

pub mod barker;
pub mod efficiency;
pub mod spectral;
pub mod variance;

pub use barker::{barker_z_kernel, BarkerKernel};
pub use efficiency::{relative_efficiency, replicate_variance, EfficiencyComparison, EfficiencyReport, Ratio};
pub use spectral::{generator_gap, relaxation_times, spectral_gap, symmetrize, GapSource, RelaxationSpec, RelaxationTimes};
pub use variance::{exact_asymptotic_variance, gibbs_asymptotic_variance, sis_variance, target_variance, tgs_asymptotic_variance, weight_variance_exact};
