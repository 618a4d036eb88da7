//! Exact asymptotic variances on enumerated chains.
//!
//! For a chain with kernel `P` and invariant law `pi`, the asymptotic
//! variance of the ergodic mean of `phi` is `2 <phi, u>_pi - <phi, phi>_pi`,
//! where `phi` is centred under `pi` and `u` solves the Poisson equation
//! `(I - P) u = phi` with `pi u = 0`.

use nalgebra::{DMatrix, DVector};

use crate::discrete::KernelMatrix;
use crate::error::{Error, Result};

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// `E_pi[h]`.
pub fn expectation(pi: &[f64], h: &[f64]) -> f64 {
    pi.iter().zip(h).map(|(p, v)| p * v).sum()
}

/// `var_pi(h)`.
pub fn target_variance(pi: &[f64], h: &[f64]) -> f64 {
    let m = expectation(pi, h);
    pi.iter().zip(h).map(|(p, v)| p * (v - m) * (v - m)).sum()
}

/// Asymptotic variance of `(1/n) sum phi(X_t)` scaled by `n`, computed with
/// the fundamental matrix `(I - P + 1 pi^T)^{-1}`.
pub fn exact_asymptotic_variance(transition: &DMatrix<f64>, pi: &[f64], phi: &[f64]) -> Result<f64> {
    let n = pi.len();
    check_len("function", phi.len(), n)?;
    let mean = expectation(pi, phi);
    let centred = DVector::from_iterator(n, phi.iter().map(|v| v - mean));
    let mut a = DMatrix::identity(n, n) - transition;
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += pi[j];
        }
    }
    let u = a
        .lu()
        .solve(&centred)
        .ok_or_else(|| Error::Config("fundamental matrix is singular; the chain is not ergodic".into()))?;
    let mut total = 0.0;
    for i in 0..n {
        total += pi[i] * centred[i] * (2.0 * u[i] - centred[i]);
    }
    Ok(total.max(0.0))
}

/// Normalised importance weights `w = 1/Z` of a tempered kernel.
pub fn weights(kernel: &KernelMatrix) -> Result<Vec<f64>> {
    let z = kernel
        .z
        .as_ref()
        .ok_or_else(|| Error::Config("Gibbs kernels carry no importance weights".into()))?;
    Ok(z.iter().map(|z| 1.0 / z).collect())
}

/// Asymptotic variance of the self-normalised estimate of `E_f[h]` from a
/// tempered chain: the chain variance of `w (h - E_f h)`, by the delta
/// method with `E_{fZ}[w] = 1`.
pub fn tgs_asymptotic_variance(kernel: &KernelMatrix, h: &[f64]) -> Result<f64> {
    check_len("function", h.len(), kernel.size())?;
    let w = weights(kernel)?;
    let m = expectation(&kernel.target, h);
    let phi: Vec<f64> = w.iter().zip(h).map(|(w, v)| w * (v - m)).collect();
    exact_asymptotic_variance(&kernel.transition, &kernel.stationary, &phi)
}

pub fn gibbs_asymptotic_variance(kernel: &KernelMatrix, h: &[f64]) -> Result<f64> {
    check_len("function", h.len(), kernel.size())?;
    exact_asymptotic_variance(&kernel.transition, &kernel.stationary, h)
}

/// Variance of the self-normalised estimator with i.i.d. draws from `fZ`:
/// `E_f[w (h - E_f h)^2]`.
pub fn sis_variance(kernel: &KernelMatrix, h: &[f64]) -> Result<f64> {
    check_len("function", h.len(), kernel.size())?;
    let w = weights(kernel)?;
    let m = expectation(&kernel.target, h);
    Ok(kernel
        .target
        .iter()
        .zip(&w)
        .zip(h)
        .map(|((f, w), v)| f * w * (v - m) * (v - m))
        .sum())
}

/// `Var_{fZ}(W) = E_f[w] - 1`.
pub fn weight_variance_exact(kernel: &KernelMatrix) -> Result<f64> {
    let w = weights(kernel)?;
    Ok(expectation(&kernel.target, &w) - 1.0)
}

/// `n var_f(h) / sigma^2`.
pub fn effective_sample_size(n: usize, target_var: f64, asymptotic_var: f64) -> f64 {
    n as f64 * target_var / asymptotic_var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{build_kernel, enumerate_distribution, BinaryModel, BinaryModification, EtaSpec, ProductBernoulli, UpdateRule};
    use crate::sampler::Kernel;

    #[test]
    fn independent_draws_have_target_variance() {
        let pi = [0.2, 0.5, 0.3];
        let p = DMatrix::from_fn(3, 3, |_, j| pi[j]);
        let h = [1.0, -2.0, 4.0];
        let v = exact_asymptotic_variance(&p, &pi, &h).unwrap();
        assert!((v - target_variance(&pi, &h)).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_matches_autocorrelation_sum() {
        // Second eigenvalue l = 1 - a - b gives sigma^2 = var (1 + l) / (1 - l).
        let (a, b) = (0.2, 0.35);
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b]);
        let pi = [b / (a + b), a / (a + b)];
        let h = [0.0, 1.0];
        let l = 1.0 - a - b;
        let expected = target_variance(&pi, &h) * (1.0 + l) / (1.0 - l);
        assert!((exact_asymptotic_variance(&p, &pi, &h).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_modification_has_unit_weights() {
        let dist = enumerate_distribution(&ProductBernoulli::new(vec![0.3, 0.6, 0.1]).unwrap(), 64).unwrap();
        let model = BinaryModel::new(dist, BinaryModification::Identity, UpdateRule::Resample, EtaSpec::Constant).unwrap();
        let k = build_kernel(&model, Kernel::Tempered).unwrap();
        assert!(weight_variance_exact(&k).unwrap().abs() < 1e-14);
        let h: Vec<f64> = (0..8).map(|s| s as f64).collect();
        let g = build_kernel(&model, Kernel::Gibbs).unwrap();
        let a = tgs_asymptotic_variance(&k, &h).unwrap();
        let b = gibbs_asymptotic_variance(&g, &h).unwrap();
        assert!((a - b).abs() < 1e-10 * b);
        assert!((sis_variance(&k, &h).unwrap() - target_variance(&g.target, &h)).abs() < 1e-12);
    }
}
