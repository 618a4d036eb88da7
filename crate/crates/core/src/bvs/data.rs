//! Regression datasets: centring, cached cross-products, CSV ingestion and
//! the simulated benchmark designs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::sampler::chain_rng;

/// Above this many predictors `X^T X` is not cached by default.
pub const XTX_AUTO_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOptions {
    /// Rescale every centred column to unit Euclidean norm.
    pub unit_scale: bool,
    /// Cache `X^T X`; `None` decides from `p`.
    pub precompute_xtx: Option<bool>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            unit_scale: false,
            precompute_xtx: None,
        }
    }
}

/// Centred design and response with the cross-products the samplers need.
#[derive(Clone, Debug)]
pub struct BvsDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    xtx: Option<DMatrix<f64>>,
    col_sq_norms: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    warnings: Vec<String>,
}

impl BvsDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, options: DatasetOptions) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || p == 0 {
            return Err(Error::Parameter(format!("need n >= 2 and p >= 1, got n = {n}, p = {p}")));
        }
        if y.len() != n {
            return Err(Error::Parameter(format!("X has {n} rows but Y has {} entries", y.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite entry in X or Y".into()));
        }
        let mut x = x;
        let mut warnings = Vec::new();
        for j in 0..p {
            let mut col = x.column_mut(j);
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let norm = col.norm();
            if norm <= 1e-12 * (1.0 + mean.abs()) * (n as f64).sqrt() {
                col.fill(0.0);
                warnings.push(format!("column {} is constant and was centred to zeros", j + 1));
            } else if options.unit_scale {
                col.unscale_mut(norm);
            }
        }
        let mut y = DVector::from_vec(y);
        let ymean = y.mean();
        y.add_scalar_mut(-ymean);
        let yty = y.dot(&y);
        if yty <= 0.0 {
            return Err(Error::Parameter("response is constant after centring".into()));
        }
        let xty: Vec<f64> = (0..p).map(|j| x.column(j).dot(&y)).collect();
        let col_sq_norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
        let cache = options.precompute_xtx.unwrap_or(p <= XTX_AUTO_LIMIT);
        let xtx = cache.then(|| x.tr_mul(&x));
        Ok(Self {
            x,
            y,
            xtx,
            col_sq_norms,
            xty,
            yty,
            warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn xtx(&self) -> Option<&DMatrix<f64>> {
        self.xtx.as_ref()
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `X_j^T X_j`.
    pub fn col_sq_norm(&self, j: usize) -> f64 {
        self.col_sq_norms[j]
    }

    /// `X_i^T X_j`.
    pub fn xtx_entry(&self, i: usize, j: usize) -> f64 {
        match &self.xtx {
            Some(m) => m[(i, j)],
            None => self.x.column(i).dot(&self.x.column(j)),
        }
    }

    /// Row `k` of `X^T X` written into `out` (length `p`).
    pub fn xtx_row_into(&self, k: usize, out: &mut [f64]) {
        match &self.xtx {
            Some(m) => out.copy_from_slice(m.column(k).as_slice()),
            None => {
                let xk = self.x.column(k);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = xk.dot(&self.x.column(j));
                }
            }
        }
    }
}

/// Reads a numeric CSV. A first row that does not parse as numbers is a header.
fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        if line == 0 && parsed.iter().any(|r| r.is_err()) {
            continue;
        }
        let ingestion = |column: usize, message: String| Error::Ingestion {
            path: path.to_path_buf(),
            row: line + 1,
            column,
            message,
        };
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(ingestion(
                record.len().min(w) + 1,
                format!("expected {w} fields, found {}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(w);
        for (j, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(ingestion(j + 1, format!("`{}` is not a finite number", cell.trim())))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

/// Loads `X` (one row per observation) and `Y` (one value per row).
pub fn load_dataset(x_path: &Path, y_path: &Path, options: DatasetOptions) -> Result<BvsDataset> {
    let xr = read_numeric_csv(x_path)?;
    let yr = read_numeric_csv(y_path)?;
    let y: Vec<f64> = if yr.len() == 1 && yr[0].len() > 1 {
        yr[0].clone()
    } else {
        if let Some(bad) = yr.iter().position(|r| r.len() != 1) {
            return Err(Error::Ingestion {
                path: y_path.to_path_buf(),
                row: bad + 1,
                column: 2,
                message: "response file must have a single column".into(),
            });
        }
        yr.iter().map(|r| r[0]).collect()
    };
    if y.len() != xr.len() {
        return Err(Error::Ingestion {
            path: y_path.to_path_buf(),
            row: y.len().min(xr.len()) + 1,
            column: 1,
            message: format!("X has {} rows but Y has {} values", xr.len(), y.len()),
        });
    }
    let (n, p) = (xr.len(), xr[0].len());
    let x = DMatrix::from_fn(n, p, |i, j| xr[i][j]);
    BvsDataset::new(x, y, options)
}

/// Writes a raw design and response in the layout [`load_dataset`] reads.
pub fn write_dataset_csv(x_path: &Path, y_path: &Path, x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(x_path)?;
    w.write_record((1..=x.ncols()).map(|j| format!("x{j}")))?;
    for i in 0..x.nrows() {
        w.write_record((0..x.ncols()).map(|j| fmt_real(x[(i, j)])))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(y_path)?;
    w.write_record(["y"])?;
    for v in y {
        w.write_record([fmt_real(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// The three simulated designs: a strongly correlated pair (1), two
/// correlated triples (2) and independent predictors (3).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimScenario {
    #[serde(rename = "1")]
    CorrelatedPair,
    #[serde(rename = "2")]
    CorrelatedBlocks,
    #[serde(rename = "3")]
    Uncorrelated,
}

impl SimScenario {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::CorrelatedPair),
            2 => Ok(Self::CorrelatedBlocks),
            3 => Ok(Self::Uncorrelated),
            other => Err(Error::Parameter(format!("scenario must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::CorrelatedPair => 1,
            Self::CorrelatedBlocks => 2,
            Self::Uncorrelated => 3,
        }
    }

    /// Unscaled true coefficients.
    pub fn beta0(self, p: usize) -> Vec<f64> {
        let head: &[f64] = match self {
            Self::CorrelatedPair => &[1.0],
            Self::CorrelatedBlocks => &[3.0, 3.0, -2.0, 3.0, 3.0, -2.0],
            Self::Uncorrelated => &[2.0, -3.0, 2.0, 2.0, -3.0, 3.0, -2.0, 3.0, -2.0, 3.0],
        };
        let mut b = vec![0.0; p];
        b[..head.len()].copy_from_slice(head);
        b
    }

    fn min_p(self) -> usize {
        match self {
            Self::CorrelatedPair => 2,
            Self::CorrelatedBlocks => 6,
            Self::Uncorrelated => 10,
        }
    }

    /// Correlated groups of predictors and their common correlation.
    fn blocks(self) -> (Vec<Vec<usize>>, f64) {
        match self {
            Self::CorrelatedPair => (vec![vec![0, 1]], 0.99),
            Self::CorrelatedBlocks => (vec![vec![0, 1, 2], vec![3, 4, 5]], 0.9),
            Self::Uncorrelated => (vec![], 0.0),
        }
    }
}

/// A simulated dataset together with the raw draws it was built from.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub dataset: BvsDataset,
    pub x_raw: DMatrix<f64>,
    pub y_raw: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Rows of `X` are i.i.d. normal with the scenario's correlation, and
/// `Y = X beta + N(0, 1)` with `beta = snr sqrt(log(p) / n) beta0`.
pub fn simulate_scenario(
    scenario: SimScenario,
    p: usize,
    n: usize,
    snr: f64,
    seed: u64,
    options: DatasetOptions,
) -> Result<SimulatedData> {
    if p < scenario.min_p() {
        return Err(Error::Parameter(format!(
            "scenario {} needs p >= {}, got {p}",
            scenario.number(),
            scenario.min_p()
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("need n >= 2, got {n}")));
    }
    if !(snr >= 0.0 && snr.is_finite()) {
        return Err(Error::Parameter(format!("snr must be nonnegative, got {snr}")));
    }
    let scale = snr * ((p as f64).ln() / n as f64).sqrt();
    let beta: Vec<f64> = scenario.beta0(p).iter().map(|b| b * scale).collect();

    let (blocks, rho) = scenario.blocks();
    let factors: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| {
            let k = b.len();
            let s = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho });
            s.cholesky().expect("block correlation is positive definite").l()
        })
        .collect();
    let mut in_block = vec![None; p];
    for (bi, b) in blocks.iter().enumerate() {
        for (pos, &j) in b.iter().enumerate() {
            in_block[j] = Some((bi, pos));
        }
    }

    let mut rng = chain_rng(seed, 0);
    let mut x = DMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for j in 0..p {
            x[(i, j)] = match in_block[j] {
                None => z[j],
                Some((bi, pos)) => {
                    let b = &blocks[bi];
                    (0..=pos).map(|r| factors[bi][(pos, r)] * z[b[r]]).sum()
                }
            };
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mean: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            let e: f64 = rng.sample(StandardNormal);
            mean + e
        })
        .collect();
    let dataset = BvsDataset::new(x.clone(), y.clone(), options)?;
    Ok(SimulatedData {
        dataset,
        x_raw: x,
        y_raw: y,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centring_identity_design() {
        let d = BvsDataset::new(DMatrix::identity(2, 2), vec![1.0, -1.0], DatasetOptions::default()).unwrap();
        assert_eq!(d.x(), &DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        assert_eq!(d.xty(), &[1.0, -1.0]);
        assert_eq!(d.yty(), 2.0);
    }

    #[test]
    fn constant_column_is_flagged() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 3.0, 4.0]);
        let d = BvsDataset::new(x, vec![1.0, 0.0, 2.0], DatasetOptions::default()).unwrap();
        assert!(d.x().column(1).iter().all(|v| *v == 0.0));
        assert_eq!(d.warnings().len(), 1);
    }

    #[test]
    fn unit_scaling_and_centring_invariants() {
        let sim = simulate_scenario(
            SimScenario::CorrelatedBlocks,
            12,
            40,
            2.0,
            3,
            DatasetOptions { unit_scale: true, precompute_xtx: Some(false) },
        )
        .unwrap();
        let d = &sim.dataset;
        for j in 0..d.p() {
            assert!(d.x().column(j).sum().abs() < 1e-10);
            assert!((d.col_sq_norm(j) - 1.0).abs() < 1e-12);
        }
        assert!(d.y().sum().abs() < 1e-10);
        let mut row = vec![0.0; 12];
        d.xtx_row_into(2, &mut row);
        assert!((row[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_coefficients() {
        assert_eq!(SimScenario::CorrelatedPair.beta0(4), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(SimScenario::CorrelatedBlocks.beta0(7), vec![3.0, 3.0, -2.0, 3.0, 3.0, -2.0, 0.0]);
        let sim = simulate_scenario(SimScenario::Uncorrelated, 20, 30, 0.0, 1, DatasetOptions::default()).unwrap();
        assert!(sim.beta.iter().all(|b| *b == 0.0));
        assert!(simulate_scenario(SimScenario::Uncorrelated, 9, 30, 1.0, 1, DatasetOptions::default()).is_err());
    }

    #[test]
    fn correlated_pair_is_correlated() {
        let sim = simulate_scenario(SimScenario::CorrelatedPair, 5, 4000, 1.0, 8, DatasetOptions::default()).unwrap();
        let x = &sim.x_raw;
        let r = x.column(0).dot(&x.column(1)) / (x.column(0).norm() * x.column(1).norm());
        assert!((r - 0.99).abs() < 0.005, "sample correlation {r}");
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let (xp, yp) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
        let sim = simulate_scenario(SimScenario::CorrelatedPair, 6, 15, 3.0, 21, DatasetOptions::default()).unwrap();
        write_dataset_csv(&xp, &yp, &sim.x_raw, &sim.y_raw).unwrap();
        let back = load_dataset(&xp, &yp, DatasetOptions::default()).unwrap();
        assert_eq!(back.xtx(), sim.dataset.xtx());
        assert_eq!(back.xty(), sim.dataset.xty());
        assert_eq!(back.yty(), sim.dataset.yty());
    }

    #[test]
    fn ingestion_errors_carry_locations() {
        let dir = tempfile::tempdir().unwrap();
        let (xp, yp) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
        std::fs::write(&xp, "a,b\n1,2\n3\n").unwrap();
        std::fs::write(&yp, "1\n2\n").unwrap();
        match load_dataset(&xp, &yp, DatasetOptions::default()) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&xp, "1,2\n3,oops\n").unwrap();
        match load_dataset(&xp, &yp, DatasetOptions::default()) {
            Err(Error::Ingestion { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&xp, "1,2\n3,4\n5,6\n").unwrap();
        assert!(matches!(load_dataset(&xp, &yp, DatasetOptions::default()), Err(Error::Ingestion { .. })));
    }
}
