//! Inclusion vector with incrementally maintained sufficient statistics.
//!
//! For the active set `g` (in insertion order) the state keeps the lower
//! Cholesky factor `L` of `A = X_g^T X_g + lambda I`, `z = L^-1 X_g^T Y`, and
//! in sweep mode also `W = L^-1 C` where `C` holds the rows `g` of
//! `X^T X + lambda I`. Column `j` of `W` is everything needed to score adding
//! predictor `j`, so all `p` conditional inclusion probabilities cost
//! `O(|g| p + |g|^3)`.
//!
//! Adding a predictor appends one row to `L`, `z` and `W`. Removing one drops
//! its row of `L` and restores triangularity with Givens rotations applied on
//! the right; the same rotations act on the rows of `z` and `W`.

use nalgebra::DMatrix;

use crate::bvs::data::BvsDataset;
use crate::bvs::marginal::{active_set, log_marginal_active, BvsPrior, PriorKind, Scorer, PIVOT_TOL};
use crate::error::{Error, Result};

const INACTIVE: usize = usize::MAX;

/// Which statistics the state maintains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateMode {
    /// Keep `W` so that every conditional is available after each move.
    Sweep,
    /// Only `L` and `z`; single-flip ratios cost `O(|g|^2)`.
    Local,
}

#[derive(Clone, Debug)]
pub struct GammaState<'a> {
    data: &'a BvsDataset,
    prior: BvsPrior,
    scorer: Scorer,
    mode: StateMode,
    gamma: Vec<bool>,
    active: Vec<usize>,
    position: Vec<usize>,
    /// Row `r` holds `L[r][0..=r]`.
    l: Vec<Vec<f64>>,
    z: Vec<f64>,
    w: Vec<Vec<f64>>,
    quad: f64,
    log_det: f64,
    log_post: f64,
    row_buf: Vec<f64>,
    sq_buf: Vec<f64>,
    dot_buf: Vec<f64>,
    fallbacks: u64,
    clamps: u64,
}

impl<'a> GammaState<'a> {
    pub fn new(data: &'a BvsDataset, prior: BvsPrior, gamma: Vec<bool>, mode: StateMode) -> Result<Self> {
        prior.validate()?;
        let p = data.p();
        if gamma.len() != p {
            return Err(Error::Parameter(format!("inclusion vector has length {} but p = {p}", gamma.len())));
        }
        let mut s = Self {
            data,
            prior,
            scorer: Scorer::new(&prior, data.n(), data.yty()),
            mode,
            gamma,
            active: Vec::new(),
            position: vec![INACTIVE; p],
            l: Vec::new(),
            z: Vec::new(),
            w: Vec::new(),
            quad: 0.0,
            log_det: 0.0,
            log_post: 0.0,
            row_buf: vec![0.0; p],
            sq_buf: vec![0.0; p],
            dot_buf: vec![0.0; p],
            fallbacks: 0,
            clamps: 0,
        };
        s.refactor()?;
        Ok(s)
    }

    pub fn empty(data: &'a BvsDataset, prior: BvsPrior, mode: StateMode) -> Result<Self> {
        Self::new(data, prior, vec![false; data.p()], mode)
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[bool] {
        &self.gamma
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn size(&self) -> usize {
        self.active.len()
    }

    pub fn mode(&self) -> StateMode {
        self.mode
    }

    pub fn prior(&self) -> &BvsPrior {
        &self.prior
    }

    /// Cached `log p(Y | gamma) + log p(gamma)`.
    pub fn log_posterior(&self) -> f64 {
        self.log_post
    }

    /// From-scratch rebuilds triggered by numerical trouble.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// Residual sums that had to be clamped before taking logs.
    pub fn clamps(&self) -> u64 {
        self.clamps
    }

    fn score(&mut self, m: usize, quad: f64, log_det: f64) -> f64 {
        let (lp, clamped) = self.scorer.score(m, quad, log_det);
        self.clamps += clamped as u64;
        lp
    }

    /// Rebuilds every cached quantity from the inclusion vector.
    pub fn refactor(&mut self) -> Result<()> {
        let active = active_set(&self.gamma);
        let m = active.len();
        let lambda = self.prior.lambda();
        let mut l = Vec::with_capacity(m);
        let mut z = Vec::with_capacity(m);
        if m > 0 {
            let a = DMatrix::from_fn(m, m, |r, s| {
                self.data.xtx_entry(active[r], active[s]) + if r == s { lambda } else { 0.0 }
            });
            let chol = a.clone().cholesky().ok_or_else(|| Error::SingularModel { gamma: active.clone() })?;
            let lm = chol.l();
            for r in 0..m {
                if lm[(r, r)] * lm[(r, r)] <= PIVOT_TOL * a[(r, r)] {
                    return Err(Error::SingularModel { gamma: active.clone() });
                }
                l.push((0..=r).map(|s| lm[(r, s)]).collect::<Vec<f64>>());
            }
            for r in 0..m {
                let b = self.data.xty()[active[r]];
                let acc: f64 = (0..r).map(|s| l[r][s] * z[s]).sum();
                z.push((b - acc) / l[r][r]);
            }
        }
        let mut w = Vec::new();
        if self.mode == StateMode::Sweep {
            for r in 0..m {
                self.data.xtx_row_into(active[r], &mut self.row_buf);
                let mut row = self.row_buf.clone();
                row[active[r]] += lambda;
                for s in 0..r {
                    let coef = l[r][s];
                    let prev: &Vec<f64> = &w[s];
                    row.iter_mut().zip(prev).for_each(|(v, p)| *v -= coef * p);
                }
                let inv = 1.0 / l[r][r];
                row.iter_mut().for_each(|v| *v *= inv);
                w.push(row);
            }
        }
        self.position.iter_mut().for_each(|v| *v = INACTIVE);
        for (r, &j) in active.iter().enumerate() {
            self.position[j] = r;
        }
        self.active = active;
        self.l = l;
        self.z = z;
        self.w = w;
        self.refresh_summaries();
        Ok(())
    }

    fn refresh_summaries(&mut self) {
        self.quad = self.z.iter().map(|v| v * v).sum();
        self.log_det = 2.0 * self.l.iter().enumerate().map(|(r, row)| row[r].ln()).sum::<f64>();
        self.log_post = self.score(self.active.len(), self.quad, self.log_det);
    }

    /// `L^-1 A[g, j]` by forward substitution.
    fn solve_column(&self, j: usize) -> Vec<f64> {
        let m = self.active.len();
        let mut v = Vec::with_capacity(m);
        for r in 0..m {
            let rhs = self.data.xtx_entry(self.active[r], j);
            let acc: f64 = (0..r).map(|s| self.l[r][s] * v[s]).sum();
            v.push((rhs - acc) / self.l[r][r]);
        }
        v
    }

    /// `L^-1 e_r`.
    fn solve_unit(&self, r: usize) -> Vec<f64> {
        let m = self.active.len();
        let mut v = vec![0.0; m];
        v[r] = 1.0 / self.l[r][r];
        for k in (r + 1)..m {
            let acc: f64 = (r..k).map(|s| self.l[k][s] * v[s]).sum();
            v[k] = -acc / self.l[k][k];
        }
        v
    }

    fn addition_pivot(&self, j: usize, l: &[f64]) -> (f64, f64) {
        let a = self.data.col_sq_norm(j) + self.prior.lambda();
        let d = a - l.iter().map(|v| v * v).sum::<f64>();
        (a, d)
    }

    /// Whether adding `j` (currently excluded) gives a rank-deficient g-prior
    /// model. Such models are outside the support.
    fn singular_addition(&self, a: f64, d: f64) -> bool {
        self.prior.kind == PriorKind::GPrior && d <= PIVOT_TOL * a
    }

    /// `log f(gamma with j flipped) - log f(gamma)`; `-inf` when the flip
    /// leaves the support.
    pub fn flip_log_ratio(&mut self, j: usize) -> f64 {
        let m = self.active.len();
        let r = self.position[j];
        if r == INACTIVE {
            let l = match self.mode {
                StateMode::Sweep => self.w.iter().map(|row| row[j]).collect(),
                StateMode::Local => self.solve_column(j),
            };
            let (a, d) = self.addition_pivot(j, &l);
            if self.singular_addition(a, d) {
                return f64::NEG_INFINITY;
            }
            let d = d.max(PIVOT_TOL * a);
            let t: f64 = l.iter().zip(&self.z).map(|(x, y)| x * y).sum();
            let resid = self.data.xty()[j] - t;
            let lp = self.score(m + 1, self.quad + resid * resid / d, self.log_det + d.ln());
            lp - self.log_post
        } else {
            let v = self.solve_unit(r);
            let ainv: f64 = v.iter().map(|x| x * x).sum();
            let u: f64 = v.iter().zip(&self.z).map(|(x, y)| x * y).sum();
            let lp = self.score(m - 1, self.quad - u * u / ainv, self.log_det + ainv.ln());
            lp - self.log_post
        }
    }

    /// Conditional log-odds `log f(g_j = 1 | g_-j) - log f(g_j = 0 | g_-j)`
    /// for every `j`, written into `out`. Needs [`StateMode::Sweep`].
    pub fn conditional_logits(&mut self, out: &mut [f64]) {
        self.sweep(out, true);
    }

    fn sweep(&mut self, out: &mut [f64], allow_refactor: bool) {
        assert_eq!(self.mode, StateMode::Sweep, "conditional sweep needs sweep mode");
        let p = self.p();
        let m = self.active.len();
        let lambda = self.prior.lambda();

        self.sq_buf.iter_mut().for_each(|v| *v = 0.0);
        self.dot_buf.iter_mut().for_each(|v| *v = 0.0);
        for (row, &zr) in self.w.iter().zip(&self.z) {
            for j in 0..p {
                let v = row[j];
                self.sq_buf[j] += v * v;
                self.dot_buf[j] += v * zr;
            }
        }
        let with_det = self.scorer.needs_log_det();
        let mut needs_refactor = false;
        for j in 0..p {
            if self.position[j] != INACTIVE {
                continue;
            }
            let a = self.data.col_sq_norm(j) + lambda;
            let d = a - self.sq_buf[j];
            if self.singular_addition(a, d) {
                out[j] = f64::NEG_INFINITY;
                continue;
            }
            if d <= PIVOT_TOL * a {
                needs_refactor = true;
            }
            let d = d.max(PIVOT_TOL * a);
            let resid = self.data.xty()[j] - self.dot_buf[j];
            let log_det = if with_det { self.log_det + d.ln() } else { 0.0 };
            let lp = self.score(m + 1, self.quad + resid * resid / d, log_det);
            out[j] = lp - self.log_post;
        }
        if needs_refactor && allow_refactor && self.refactor().is_ok() {
            // A ridge-prior pivot can only vanish through accumulated drift.
            self.fallbacks += 1;
            return self.sweep(out, false);
        }

        if m > 0 {
            // Columns of L^-1 give diag(A^-1) and u = L^-T z.
            let mut linv = vec![vec![0.0; m]; m];
            for r in 0..m {
                linv[r][r] = 1.0 / self.l[r][r];
                for k in 0..r {
                    let acc: f64 = (k..r).map(|s| self.l[r][s] * linv[s][k]).sum();
                    linv[r][k] = -acc / self.l[r][r];
                }
            }
            for r in 0..m {
                let mut ainv = 0.0;
                let mut u = 0.0;
                for k in r..m {
                    ainv += linv[k][r] * linv[k][r];
                    u += linv[k][r] * self.z[k];
                }
                let lp = self.score(m - 1, self.quad - u * u / ainv, self.log_det + ainv.ln());
                out[self.active[r]] = self.log_post - lp;
            }
        }
    }

    /// Flips coordinate `j`.
    pub fn flip(&mut self, j: usize) -> Result<()> {
        if self.gamma[j] {
            self.remove(j);
            Ok(())
        } else {
            self.add(j)
        }
    }

    fn add(&mut self, k: usize) -> Result<()> {
        let l: Vec<f64> = match self.mode {
            StateMode::Sweep => self.w.iter().map(|row| row[k]).collect(),
            StateMode::Local => self.solve_column(k),
        };
        let (a, d) = self.addition_pivot(k, &l);
        self.gamma[k] = true;
        if d <= PIVOT_TOL * a {
            if self.singular_addition(a, d) {
                self.gamma[k] = false;
                let mut gamma = self.active.clone();
                gamma.push(k);
                return Err(Error::SingularModel { gamma });
            }
            self.fallbacks += 1;
            return self.refactor();
        }
        let sd = d.sqrt();
        let t: f64 = l.iter().zip(&self.z).map(|(x, y)| x * y).sum();
        let zk = (self.data.xty()[k] - t) / sd;
        if self.mode == StateMode::Sweep {
            self.data.xtx_row_into(k, &mut self.row_buf);
            let mut row = self.row_buf.clone();
            row[k] += self.prior.lambda();
            for (coef, prev) in l.iter().zip(&self.w) {
                row.iter_mut().zip(prev).for_each(|(v, p)| *v -= coef * p);
            }
            let inv = 1.0 / sd;
            row.iter_mut().for_each(|v| *v *= inv);
            self.w.push(row);
        }
        let mut lrow = l;
        lrow.push(sd);
        self.l.push(lrow);
        self.z.push(zk);
        self.position[k] = self.active.len();
        self.active.push(k);
        self.quad += zk * zk;
        self.log_det += d.ln();
        self.log_post = self.score(self.active.len(), self.quad, self.log_det);
        Ok(())
    }

    fn remove(&mut self, j: usize) {
        let r = self.position[j];
        let m = self.active.len();
        self.l.remove(r);
        // Rows r.. now carry one entry above the diagonal.
        for i in r..(m - 1) {
            let (a, b) = (self.l[i][i], self.l[i][i + 1]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for row in self.l[i..].iter_mut() {
                let (x, y) = (row[i], row[i + 1]);
                row[i] = c * x + s * y;
                row[i + 1] = -s * x + c * y;
            }
            let (x, y) = (self.z[i], self.z[i + 1]);
            self.z[i] = c * x + s * y;
            self.z[i + 1] = -s * x + c * y;
            if self.mode == StateMode::Sweep {
                let (lo, hi) = self.w.split_at_mut(i + 1);
                for (u, v) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*u, *v);
                    *u = c * x + s * y;
                    *v = -s * x + c * y;
                }
            }
        }
        for (i, row) in self.l.iter_mut().enumerate().skip(r) {
            row.truncate(i + 1);
        }
        self.z.pop();
        if self.mode == StateMode::Sweep {
            self.w.pop();
        }
        self.active.remove(r);
        self.position[j] = INACTIVE;
        for (pos, &k) in self.active.iter().enumerate().skip(r) {
            self.position[k] = pos;
        }
        self.gamma[j] = false;
        self.refresh_summaries();
    }

    /// Largest discrepancy between the cached statistics and a rebuild: the
    /// log posterior, and every entry of `L L^T` against `A`.
    pub fn verify(&self) -> Result<f64> {
        let fresh = log_marginal_active(&self.active, self.data, &self.prior)?;
        let mut worst = (fresh - self.log_post).abs();
        let lambda = self.prior.lambda();
        let m = self.active.len();
        for r in 0..m {
            for s in 0..=r {
                let llt: f64 = (0..=s).map(|k| self.l[r][k] * self.l[s][k]).sum();
                let a = self.data.xtx_entry(self.active[r], self.active[s]) + if r == s { lambda } else { 0.0 };
                worst = worst.max((llt - a).abs() / (1.0 + a.abs()));
            }
        }
        Ok(worst)
    }
}
