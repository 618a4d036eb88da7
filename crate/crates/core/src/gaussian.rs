//! Multivariate normal targets and their modified conditionals.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Target;

const SYMMETRY_TOL: f64 = 1e-12;

/// Moments of a univariate normal full conditional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub variance: f64,
}

/// `N(mean, covariance)` with the precision matrix cached for conditioning.
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    /// Lower Cholesky factor of the covariance, for exact joint draws.
    factor: DMatrix<f64>,
    diagonal: bool,
}

impl GaussianTarget {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Parameter(format!(
                "mean has length {d} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite mean or covariance entry".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Parameter(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eig = min_eigenvalue(&covariance);
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min_eig })?;
        let precision = chol.inverse();
        let factor = chol.l();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || covariance[(i, j)] == 0.0));
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
            precision,
            factor,
            diagonal,
        })
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d], DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Conditional law of `x_i` given the other coordinates of `x`
    /// (`x[i]` itself is ignored).
    pub fn conditional(&self, i: usize, x: &[f64]) -> Result<ConditionalMoments> {
        let d = self.dim();
        if i >= d || x.len() != d {
            return Err(Error::Parameter(format!("coordinate {i} out of range for d = {d}")));
        }
        if self.diagonal {
            return Ok(ConditionalMoments {
                mean: self.mean[i],
                variance: self.covariance[(i, i)],
            });
        }
        let lii = self.precision[(i, i)];
        let mut shift = 0.0;
        for j in 0..d {
            if j != i {
                if !x[j].is_finite() {
                    return Err(Error::NonFiniteDensity { coordinate: j });
                }
                shift += self.precision[(i, j)] * (x[j] - self.mean[j]);
            }
        }
        let m = ConditionalMoments {
            mean: self.mean[i] - shift / lii,
            variance: 1.0 / lii,
        };
        if !(m.mean.is_finite() && m.variance > 0.0) {
            return Err(Error::NonFiniteDensity { coordinate: i });
        }
        Ok(m)
    }

    /// Exact joint draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mean + &self.factor * z).iter().copied().collect()
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A modified conditional `g(x_i | x_-i)` built from the normal conditional
/// `f(x_i | x_-i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModifiedConditionalSpec {
    /// `g = f`.
    Identity,
    /// `g ∝ f^beta`, i.e. the variance inflated by `1/beta`.
    Tempered { beta: f64 },
    /// `g = f/(1+eps) + eps/(1+eps) f^(beta)`; `f/g <= 1 + eps`.
    Mixed {
        beta: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    /// Location-scale Student-t with the conditional mean and sd.
    StudentT {
        #[serde(default = "default_nu")]
        nu: f64,
    },
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_nu() -> f64 {
    0.2
}

impl ModifiedConditionalSpec {
    pub fn tempered(beta: f64) -> Self {
        Self::Tempered { beta }
    }

    pub fn mixed(beta: f64) -> Self {
        Self::Mixed {
            beta,
            epsilon: default_epsilon(),
        }
    }

    pub fn student_t() -> Self {
        Self::StudentT { nu: default_nu() }
    }

    pub fn validate(&self) -> Result<()> {
        let beta_ok = |beta: f64| {
            if beta > 0.0 && beta <= 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("beta must lie in (0, 1], got {beta}")))
            }
        };
        match *self {
            Self::Identity => Ok(()),
            Self::Tempered { beta } => beta_ok(beta),
            Self::Mixed { beta, epsilon } => {
                beta_ok(beta)?;
                if epsilon > 0.0 && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")))
                }
            }
            Self::StudentT { nu } => {
                if nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("nu must be positive, got {nu}")))
                }
            }
        }
    }

    /// `sup f/g` when finite.
    pub fn ratio_bound(&self) -> Option<f64> {
        match *self {
            Self::Identity => Some(1.0),
            Self::Tempered { beta } => Some(beta.powf(-0.5)),
            Self::Mixed { epsilon, .. } => Some(1.0 + epsilon),
            Self::StudentT { .. } => None,
        }
    }

    pub fn density(&self, moments: ConditionalMoments) -> Result<UnivariateDensity> {
        self.validate()?;
        if !(moments.variance > 0.0 && moments.mean.is_finite()) {
            return Err(Error::Parameter(format!(
                "conditional variance must be positive, got {}",
                moments.variance
            )));
        }
        let ConditionalMoments { mean, variance } = moments;
        Ok(match *self {
            Self::Identity => UnivariateDensity::Normal { mean, variance },
            Self::Tempered { beta } => UnivariateDensity::Normal {
                mean,
                variance: variance / beta,
            },
            Self::Mixed { beta, epsilon } => UnivariateDensity::Mixture {
                mean,
                variance,
                tempered_variance: variance / beta,
                tempered_weight: epsilon / (1.0 + epsilon),
            },
            Self::StudentT { nu } => UnivariateDensity::StudentT {
                location: mean,
                scale: variance.sqrt(),
                nu,
            },
        })
    }
}

/// Normalised univariate density with exact sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnivariateDensity {
    Normal {
        mean: f64,
        variance: f64,
    },
    /// Two normals sharing a mean.
    Mixture {
        mean: f64,
        variance: f64,
        tempered_variance: f64,
        tempered_weight: f64,
    },
    StudentT {
        location: f64,
        scale: f64,
        nu: f64,
    },
}

pub fn log_normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (2.0 * PI * variance).ln() - 0.5 * r * r / variance
}

impl UnivariateDensity {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, variance } => log_normal_density(x, mean, variance),
            Self::Mixture {
                mean,
                variance,
                tempered_variance,
                tempered_weight,
            } => {
                let a = (1.0 - tempered_weight).ln() + log_normal_density(x, mean, variance);
                let b = tempered_weight.ln() + log_normal_density(x, mean, tempered_variance);
                let hi = a.max(b);
                hi + ((a - hi).exp() + (b - hi).exp()).ln()
            }
            Self::StudentT { location, scale, nu } => {
                let t = (x - location) / scale;
                libm::lgamma(0.5 * (nu + 1.0))
                    - libm::lgamma(0.5 * nu)
                    - 0.5 * (nu * PI).ln()
                    - scale.ln()
                    - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Normal { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            Self::Mixture {
                mean,
                variance,
                tempered_variance,
                tempered_weight,
            } => {
                let u: f64 = rng.random();
                let var = if u < tempered_weight { tempered_variance } else { variance };
                let z: f64 = rng.sample(StandardNormal);
                mean + var.sqrt() * z
            }
            Self::StudentT { location, scale, nu } => {
                let t = StudentT::new(nu).expect("nu validated").sample(rng);
                location + scale * t
            }
        }
    }
}

/// A Gaussian target paired with a modified-conditional family; this is the
/// object the chains run on.
#[derive(Clone, Debug)]
pub struct GaussianModel {
    pub target: GaussianTarget,
    pub modified: ModifiedConditionalSpec,
}

impl GaussianModel {
    pub fn new(target: GaussianTarget, modified: ModifiedConditionalSpec) -> Result<Self> {
        modified.validate()?;
        Ok(Self { target, modified })
    }

    fn moments(&self, i: usize, x: &[f64]) -> ConditionalMoments {
        self.target.conditional(i, x).unwrap_or(ConditionalMoments {
            mean: f64::NAN,
            variance: f64::NAN,
        })
    }

    fn modified_density(&self, m: ConditionalMoments) -> Option<UnivariateDensity> {
        self.modified.density(m).ok()
    }
}

impl Target for GaussianModel {
    type Coord = f64;

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn log_conditional(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.moments(i, x);
        log_normal_density(x[i], m.mean, m.variance)
    }

    fn log_modified(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.moments(i, x);
        self.modified_density(m).map_or(f64::NAN, |g| g.log_density(x[i]))
    }

    fn log_pair(&self, i: usize, x: &[f64]) -> (f64, f64) {
        let m = self.moments(i, x);
        let lf = log_normal_density(x[i], m.mean, m.variance);
        let lg = self.modified_density(m).map_or(f64::NAN, |g| g.log_density(x[i]));
        (lf, lg)
    }

    fn sample_conditional<R: Rng + ?Sized>(&self, i: usize, x: &[f64], rng: &mut R) -> f64 {
        let m = self.moments(i, x);
        UnivariateDensity::Normal {
            mean: m.mean,
            variance: m.variance,
        }
        .sample(rng)
    }

    fn sample_modified<R: Rng + ?Sized>(&self, i: usize, x: &[f64], rng: &mut R) -> f64 {
        let m = self.moments(i, x);
        match self.modified_density(m) {
            Some(g) => g.sample(rng),
            None => f64::NAN,
        }
    }

    fn default_state(&self) -> Vec<f64> {
        self.target.mean.iter().copied().collect()
    }
}

/// Correlation structures used in the Gaussian comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Coordinates correlated in consecutive pairs.
    Pairwise,
    PositiveExchangeable,
    NegativeExchangeable,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" | "1" => Ok(Self::Pairwise),
            "positive_exchangeable" | "positive" | "2" => Ok(Self::PositiveExchangeable),
            "negative_exchangeable" | "negative" | "3" => Ok(Self::NegativeExchangeable),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Unit-diagonal covariance for a scenario.
pub fn scenario_covariance(kind: Scenario, d: usize, rho: f64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be positive".into()));
    }
    if !rho.is_finite() {
        return Err(Error::Parameter(format!("rho must be finite, got {rho}")));
    }
    let mut s = DMatrix::identity(d, d);
    match kind {
        Scenario::Pairwise => {
            if d % 2 != 0 {
                return Err(Error::Parameter(format!(
                    "pairwise scenario needs an even dimension, got {d}"
                )));
            }
            for k in (0..d).step_by(2) {
                s[(k, k + 1)] = rho;
                s[(k + 1, k)] = rho;
            }
        }
        Scenario::PositiveExchangeable | Scenario::NegativeExchangeable => {
            let off = if kind == Scenario::PositiveExchangeable {
                rho
            } else if d > 1 {
                -rho / (d as f64 - 1.0)
            } else {
                0.0
            };
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        s[(i, j)] = off;
                    }
                }
            }
        }
    }
    let min_eig = min_eigenvalue(&s);
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
    }
    Ok(s)
}

pub fn export_covariance_csv(path: &Path, covariance: &DMatrix<f64>) -> Result<()> {
    crate::io::write_matrix_csv(path, covariance)
}
