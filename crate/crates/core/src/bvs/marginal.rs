//! Closed-form model evidence for the spike-and-slab linear model with the
//! coefficient and noise variance integrated out.
//!
//! With `A = X_g^T X_g + lambda I`, `b = X_g^T Y` and `Q = b^T A^-1 b`:
//!
//! * g-prior (`lambda = 0`):
//!   `-(m/2) log(1+c) - (n/2) log(Y^T Y - c/(1+c) Q)`
//! * independence prior (`lambda = 1/c`):
//!   `-(1/2)(m log c + log det A) - (n/2) log(Y^T Y - Q)`
//!
//! each plus the prior term `m log(h/(1-h))`, where `m = |gamma|`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bvs::data::BvsDataset;
use crate::error::{Error, Result};

/// Relative pivot below which an active block is treated as rank deficient.
pub const PIVOT_TOL: f64 = 1e-10;
/// Residual sums are clamped at this fraction of `Y^T Y`.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    /// `Sigma_g = c (X_g^T X_g)^-1`.
    #[serde(rename = "gprior")]
    GPrior,
    /// `Sigma_g = c I`.
    #[serde(rename = "indep")]
    Independence,
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gprior" | "g_prior" | "g-prior" => Ok(Self::GPrior),
            "indep" | "independence" => Ok(Self::Independence),
            other => Err(Error::Config(format!("unknown prior `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvsPrior {
    pub c: f64,
    pub h: f64,
    pub kind: PriorKind,
}

impl BvsPrior {
    pub fn new(c: f64, h: f64, kind: PriorKind) -> Result<Self> {
        let prior = Self { c, h, kind };
        prior.validate()?;
        Ok(prior)
    }

    /// `c = 1000`, `h = 5/p` (capped at 1/2 for tiny `p`), g-prior.
    pub fn benchmark_default(p: usize) -> Self {
        Self {
            c: 1e3,
            h: (5.0 / p as f64).min(0.5),
            kind: PriorKind::GPrior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("c must be positive, got {}", self.c)));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::Parameter(format!("h must lie in (0, 1), got {}", self.h)));
        }
        Ok(())
    }

    /// Ridge added to the diagonal of `X_g^T X_g`.
    pub fn lambda(&self) -> f64 {
        match self.kind {
            PriorKind::GPrior => 0.0,
            PriorKind::Independence => 1.0 / self.c,
        }
    }

    pub fn logit_h(&self) -> f64 {
        (self.h / (1.0 - self.h)).ln()
    }

    /// Log evidence plus prior from the sufficient statistics of a model.
    /// The second value reports whether the residual had to be clamped.
    pub fn log_posterior(&self, n: usize, yty: f64, m: usize, quad: f64, log_det: f64) -> (f64, bool) {
        Scorer::new(self, n, yty).score(m, quad, log_det)
    }
}

/// [`BvsPrior::log_posterior`] for one dataset with the hyperparameter
/// logarithms taken once.
#[derive(Clone, Copy, Debug)]
pub struct Scorer {
    kind: PriorKind,
    shrink: f64,
    per_variable: f64,
    half_n: f64,
    yty: f64,
}

impl Scorer {
    pub fn new(prior: &BvsPrior, n: usize, yty: f64) -> Self {
        let (shrink, evidence) = match prior.kind {
            PriorKind::GPrior => (prior.c / (1.0 + prior.c), -0.5 * prior.c.ln_1p()),
            PriorKind::Independence => (1.0, -0.5 * prior.c.ln()),
        };
        Self {
            kind: prior.kind,
            shrink,
            per_variable: evidence + prior.logit_h(),
            half_n: 0.5 * n as f64,
            yty,
        }
    }

    /// Whether [`Scorer::score`] reads `log_det`.
    pub fn needs_log_det(&self) -> bool {
        self.kind == PriorKind::Independence
    }

    pub fn score(&self, m: usize, quad: f64, log_det: f64) -> (f64, bool) {
        let raw = self.yty - self.shrink * quad;
        let floor = RESIDUAL_FLOOR * self.yty;
        let clamped = raw < floor;
        let mut lp = m as f64 * self.per_variable - self.half_n * raw.max(floor).ln();
        if self.needs_log_det() {
            lp -= 0.5 * log_det;
        }
        (lp, clamped)
    }
}

/// Active indices of a binary inclusion vector.
pub fn active_set(gamma: &[bool]) -> Vec<usize> {
    gamma.iter().enumerate().filter(|(_, g)| **g).map(|(i, _)| i).collect()
}

/// Sufficient statistics `(Q, log det A)` of a model, from scratch.
pub fn model_statistics(active: &[usize], data: &BvsDataset, prior: &BvsPrior) -> Result<(f64, f64)> {
    let m = active.len();
    if m == 0 {
        return Ok((0.0, 0.0));
    }
    let lambda = prior.lambda();
    let a = DMatrix::from_fn(m, m, |r, s| {
        data.xtx_entry(active[r], active[s]) + if r == s { lambda } else { 0.0 }
    });
    let b = DVector::from_iterator(m, active.iter().map(|&j| data.xty()[j]));
    let chol = a.clone().cholesky().ok_or_else(|| Error::SingularModel { gamma: active.to_vec() })?;
    let l = chol.l_dirty();
    for r in 0..m {
        // A tiny pivot relative to the diagonal means numerical rank loss.
        if l[(r, r)] * l[(r, r)] <= PIVOT_TOL * a[(r, r)].max(f64::MIN_POSITIVE) {
            return Err(Error::SingularModel { gamma: active.to_vec() });
        }
    }
    let log_det = 2.0 * (0..m).map(|r| l[(r, r)].ln()).sum::<f64>();
    let z = chol.l().solve_lower_triangular(&b).expect("pivots checked");
    Ok((z.norm_squared(), log_det))
}

/// `log p(Y | gamma) + log p(gamma)` up to a constant shared by all models.
pub fn log_marginal(gamma: &[bool], data: &BvsDataset, prior: &BvsPrior) -> Result<f64> {
    if gamma.len() != data.p() {
        return Err(Error::Parameter(format!(
            "inclusion vector has length {} but p = {}",
            gamma.len(),
            data.p()
        )));
    }
    let active = active_set(gamma);
    log_marginal_active(&active, data, prior)
}

pub fn log_marginal_active(active: &[usize], data: &BvsDataset, prior: &BvsPrior) -> Result<f64> {
    let (quad, log_det) = model_statistics(active, data, prior)?;
    let raw = match prior.kind {
        PriorKind::GPrior => data.yty() - prior.c / (1.0 + prior.c) * quad,
        PriorKind::Independence => data.yty() - quad,
    };
    if raw <= 0.0 {
        return Err(Error::Conditioning { gamma: active.to_vec() });
    }
    Ok(prior.log_posterior(data.n(), data.yty(), active.len(), quad, log_det).0)
}
