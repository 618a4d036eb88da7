//! Grid discretisation of a one-dimensional Barker chain.

use nalgebra::{DMatrix, DVector};

use crate::analysis::spectral::spectral_gap;
use crate::discrete::sigmoid;
use crate::error::{Error, Result};
use crate::sampler::log_sum_exp;

/// Minimum target mass the grid has to capture.
pub const GRID_MASS_TOL: f64 = 1e-8;

/// Slack allowed when a discretised proposal row sums to more than 1.
pub const PROPOSAL_MASS_TOL: f64 = 1e-9;

/// Barker acceptance `b / (a + b)` with `a = pi(x) q(y|x)`, `b = pi(y) q(x|y)`
/// given on the log scale.
pub fn barker_acceptance(log_forward: f64, log_backward: f64) -> f64 {
    sigmoid(log_backward - log_forward)
}

#[derive(Clone, Debug)]
pub struct BarkerKernel {
    pub grid: Vec<f64>,
    pub transition: DMatrix<f64>,
    /// Discretised target: `f1(z_k) w_k` normalised, `w_k` the cell width.
    pub stationary: Vec<f64>,
    /// `sum_k f1(z_k) w_k` before normalisation.
    pub grid_mass: f64,
}

impl BarkerKernel {
    pub fn max_row_sum_error(&self) -> f64 {
        self.transition
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn spectral_gap(&self) -> Result<f64> {
        spectral_gap(&self.transition, &self.stationary)
    }
}

fn cell_widths(grid: &[f64]) -> Result<Vec<f64>> {
    let n = grid.len();
    if n < 2 {
        return Err(Error::Config("grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("grid must be strictly increasing".into()));
    }
    Ok((0..n)
        .map(|k| {
            let lo = if k == 0 { grid[1] - grid[0] } else { grid[k] - grid[k - 1] };
            let hi = if k + 1 == n { grid[n - 1] - grid[n - 2] } else { grid[k + 1] - grid[k] };
            0.5 * (lo + hi)
        })
        .collect())
}

/// Builds the Barker kernel for target density `f1` and proposal density
/// `q(to | from)` on `grid`, with both densities discretised by cell width.
/// Proposals of the current point count as rejections.
pub fn barker_z_kernel<F, Q>(grid: &[f64], log_f1: F, log_q: Q) -> Result<BarkerKernel>
where
    F: Fn(f64) -> f64,
    Q: Fn(f64, f64) -> f64,
{
    let n = grid.len();
    let widths = cell_widths(grid)?;
    let log_mass: Vec<f64> = grid
        .iter()
        .zip(&widths)
        .enumerate()
        .map(|(k, (z, w))| {
            let lf = log_f1(*z);
            if lf.is_nan() || lf == f64::INFINITY {
                return Err(Error::NonFiniteDensity { coordinate: k });
            }
            Ok(lf + w.ln())
        })
        .collect::<Result<_>>()?;
    let log_total = log_sum_exp(&log_mass)?;
    let grid_mass = log_total.exp();
    if grid_mass < 1.0 - GRID_MASS_TOL {
        return Err(Error::Config(format!(
            "grid captures target mass {grid_mass}, need at least {}",
            1.0 - GRID_MASS_TOL
        )));
    }
    let log_pi: Vec<f64> = log_mass.iter().map(|v| v - log_total).collect();

    // log q~(j | k) = log q(z_j | z_k) + log w_j; any shortfall of a row
    // below 1 is rejection mass.
    let mut log_prop = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    let mut row = vec![0.0; n];
    for k in 0..n {
        for j in 0..n {
            let lq = log_q(grid[j], grid[k]);
            if lq.is_nan() || lq == f64::INFINITY {
                return Err(Error::NonFiniteDensity { coordinate: k });
            }
            row[j] = lq + widths[j].ln();
        }
        if row.iter().all(|v| *v == f64::NEG_INFINITY) {
            if log_pi[k] > f64::NEG_INFINITY {
                return Err(Error::Support { index: k });
            }
            continue;
        }
        let mass = log_sum_exp(&row)?.exp();
        if mass > 1.0 + PROPOSAL_MASS_TOL {
            return Err(Error::Config(format!("proposal row {k} carries mass {mass} on the grid")));
        }
        for j in 0..n {
            log_prop[(k, j)] = row[j];
        }
    }

    let mut transition = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut moved = 0.0;
        for j in 0..n {
            if j == k || log_prop[(k, j)] == f64::NEG_INFINITY {
                continue;
            }
            let fwd = log_pi[k] + log_prop[(k, j)];
            let bwd = log_pi[j] + log_prop[(j, k)];
            let pkj = if bwd == f64::NEG_INFINITY {
                0.0
            } else {
                log_prop[(k, j)].exp() * barker_acceptance(fwd, bwd)
            };
            transition[(k, j)] = pkj;
            moved += pkj;
        }
        transition[(k, k)] = 1.0 - moved;
    }
    Ok(BarkerKernel {
        grid: grid.to_vec(),
        transition,
        stationary: log_pi.iter().map(|v| v.exp()).collect(),
        grid_mass,
    })
}

/// Left eigenvector of a stochastic matrix for eigenvalue 1, normalised to
/// sum 1, from `(P^T - I) pi = 0` with one equation replaced by `sum pi = 1`.
pub fn left_stationary(transition: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = transition.nrows();
    let mut a = transition.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Config("stationary law is not unique".into()))?;
    Ok(pi.iter().copied().collect())
}

/// The standard normal target with proposal `N(rho z, 1)`.
pub fn gaussian_ar_kernel(rho: f64, half_width: f64, points: usize) -> Result<BarkerKernel> {
    let step = 2.0 * half_width / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| -half_width + k as f64 * step).collect();
    let ln_root_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    barker_z_kernel(
        &grid,
        |z| -0.5 * z * z - ln_root_2pi,
        |to, from| -0.5 * (to - rho * from).powi(2) - ln_root_2pi,
    )
}
