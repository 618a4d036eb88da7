//! Spectral gaps and relaxation times of explicit reversible kernels.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::discrete::{build_kernel, BinaryDistribution, BinaryModel, BinaryModification, EtaSpec, UpdateRule};
use crate::error::{Error, Result};
use crate::sampler::Kernel;

/// Largest `p` accepted by [`relaxation_times`].
pub const MAX_SPECTRAL_P: usize = 10;

/// Absolute asymmetry tolerated after the similarity transform.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `D^{1/2} M D^{-1/2}` with `D = diag(pi)`, checked for symmetry.
pub fn symmetrize(matrix: &DMatrix<f64>, stationary: &[f64]) -> Result<DMatrix<f64>> {
    let n = stationary.len();
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(Error::Config(format!(
            "matrix is {}x{} but the stationary law has {n} states",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let root: Vec<f64> = stationary.iter().map(|v| v.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| root[i] * matrix[(i, j)] / root[j]);
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (s[(i, j)], s[(j, i)]);
            asymmetry = asymmetry.max((a - b).abs());
            let m = 0.5 * (a + b);
            s[(i, j)] = m;
            s[(j, i)] = m;
        }
    }
    if !(asymmetry <= SYMMETRY_TOL) {
        return Err(Error::NonReversible { asymmetry });
    }
    Ok(s)
}

fn sorted_eigenvalues(s: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `1 - lambda_2` of a reversible transition matrix.
pub fn spectral_gap(transition: &DMatrix<f64>, stationary: &[f64]) -> Result<f64> {
    let ev = sorted_eigenvalues(symmetrize(transition, stationary)?);
    if ev.len() < 2 {
        return Err(Error::Config("spectral gap needs at least two states".into()));
    }
    Ok(1.0 - ev[1])
}

/// Smallest nonzero eigenvalue of `-Q` for a reversible generator `Q`.
pub fn generator_gap(generator: &DMatrix<f64>, stationary: &[f64]) -> Result<f64> {
    let ev = sorted_eigenvalues(symmetrize(generator, stationary)?);
    if ev.len() < 2 {
        return Err(Error::Config("spectral gap needs at least two states".into()));
    }
    Ok(-ev[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSource {
    DiscreteEigen,
    ContinuousEigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub time: f64,
    pub gap: f64,
    pub source: GapSource,
}

impl Relaxation {
    fn from_gap(gap: f64, source: GapSource) -> Self {
        Self { time: 1.0 / gap, gap, source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationTimes {
    pub gs: Relaxation,
    pub tgs: Relaxation,
    pub wtgs: Relaxation,
}

impl RelaxationTimes {
    pub fn t_gs(&self) -> f64 {
        self.gs.time
    }

    pub fn t_tgs(&self) -> f64 {
        self.tgs.time
    }

    pub fn t_wtgs(&self) -> f64 {
        self.wtgs.time
    }
}

/// Kernels compared by [`relaxation_times`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSpec {
    /// Update rule of the Gibbs baseline.
    pub gs_update: UpdateRule,
    pub modification: BinaryModification,
    pub tempered_update: UpdateRule,
    pub eta: EtaSpec,
}

impl Default for RelaxationSpec {
    /// Metropolised GS against flip-always TGS/wTGS with `eta = f(x_i = 1 | x_-i)`.
    fn default() -> Self {
        Self {
            gs_update: UpdateRule::Metropolised,
            modification: BinaryModification::Uniform,
            tempered_update: UpdateRule::Metropolised,
            eta: EtaSpec::Inclusion { k: 0.0 },
        }
    }
}

/// Exact relaxation times: discrete gap for GS, gaps of the jump generators
/// for TGS and wTGS.
pub fn relaxation_times(dist: &BinaryDistribution, spec: &RelaxationSpec) -> Result<RelaxationTimes> {
    if dist.p() > MAX_SPECTRAL_P {
        return Err(Error::StateSpaceTooLarge {
            p: dist.p(),
            limit: 1 << MAX_SPECTRAL_P,
            required: dist.len(),
        });
    }
    let gs_model = BinaryModel::new(dist.clone(), BinaryModification::Identity, spec.gs_update, spec.eta)?;
    let gs = build_kernel(&gs_model, Kernel::Gibbs)?;
    let gs_gap = spectral_gap(&gs.transition, &gs.stationary)?;

    let model = BinaryModel::new(dist.clone(), spec.modification, spec.tempered_update, spec.eta)?;
    let jump_gap = |kernel: Kernel| -> Result<f64> {
        let k = build_kernel(&model, kernel)?;
        let q = k.jump.as_ref().expect("tempered kernels carry a jump matrix");
        generator_gap(q, &k.target)
    };
    Ok(RelaxationTimes {
        gs: Relaxation::from_gap(gs_gap, GapSource::DiscreteEigen),
        tgs: Relaxation::from_gap(jump_gap(Kernel::Tempered)?, GapSource::ContinuousEigen),
        wtgs: Relaxation::from_gap(jump_gap(Kernel::Weighted)?, GapSource::ContinuousEigen),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{enumerate_distribution, ProductBernoulli};

    fn product(q: &[f64]) -> BinaryDistribution {
        enumerate_distribution(&ProductBernoulli::new(q.to_vec()).unwrap(), 1 << 12).unwrap()
    }

    #[test]
    fn two_state_gibbs_gap_is_closed_form() {
        for q in [0.1, 0.3, 0.5, 0.8] {
            let t = relaxation_times(&product(&[q]), &RelaxationSpec::default()).unwrap();
            // P = [[1-a, a], [b, 1-b]] has second eigenvalue 1 - a - b.
            let a = (q / (1.0 - q)).min(1.0);
            let b = ((1.0 - q) / q).min(1.0);
            assert!((t.gs.gap - (a + b)).abs() < 1e-12);
            assert!((t.gs.gap - 1.0 / q.max(1.0 - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair() {
        let t = relaxation_times(&product(&[0.5, 0.5]), &RelaxationSpec::default()).unwrap();
        assert!((t.t_gs() - 1.0).abs() < 1e-12);
        assert_eq!(t.gs.source, GapSource::DiscreteEigen);
        assert_eq!(t.wtgs.source, GapSource::ContinuousEigen);
    }

    #[test]
    fn rejects_non_reversible_matrix() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let pi = [1.0 / 3.0; 3];
        assert!(matches!(spectral_gap(&p, &pi), Err(Error::NonReversible { .. })));
    }

    #[test]
    fn generator_gap_of_two_state_chain() {
        // Rates a (0 -> 1) and b (1 -> 0): gap a + b.
        let (a, b) = (0.3, 1.2);
        let q = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        let pi = [b / (a + b), a / (a + b)];
        assert!((generator_gap(&q, &pi).unwrap() - (a + b)).abs() < 1e-14);
    }

    #[test]
    fn refuses_large_state_spaces() {
        let d = product(&[0.3; 11]);
        assert!(matches!(
            relaxation_times(&d, &RelaxationSpec::default()),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }
}
