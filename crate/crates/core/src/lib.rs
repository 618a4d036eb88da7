//! Tempered Gibbs sampling (TGS), its weighted variant (wTGS) and random-scan
//! Gibbs (GS) for generic coordinate-wise targets and for Bayesian variable
//! selection, with exact finite-state analysis tools.

pub mod analysis;
pub mod bvs;
pub mod checks;
pub mod discrete;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod sampler;
pub mod timing;

pub use error::{Error, Result};
