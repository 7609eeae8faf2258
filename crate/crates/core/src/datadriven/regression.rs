//! Regularized least squares over Kronecker-lifted regressors, and the
//! value iteration built on it.
//!
//! With `phi(t) = kron_row(Z(t))` the policy-evaluation step solves
//! `(L + mu I) vec(H) = sum_t phi(t) c(t)` where `L = sum_t phi(t) phi(t)^T`.
//! Every right-hand side is `vec(S)` of a symmetric `S = sum_t c(t) Z Z^T`
//! and the system commutes with transposition, so the solution is
//! symmetric. The system is therefore solved on the `d(d+1)/2` entries
//! `h_ij, i <= j`, with off-diagonal unknowns scaled by `sqrt(2)`; this has
//! the same solution and ridge as the full `d^2` system but none of its
//! antisymmetric null space. `L` only depends on the data, so its
//! Cholesky factor is computed once and reused by every iteration.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Conj, Mat, Par};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{KernelMatrix, ZLayout};
use crate::datagen::IoDataset;
use crate::error::{Error, Result};
use crate::statespace::CostWeights;

/// Largest jitter tried, as a multiple of `mu`.
pub const MAX_JITTER_FACTOR: f64 = 1e8;

/// Rows of the lifted feature matrix processed per Gram update.
const GRAM_CHUNK: usize = 1024;

/// Iterations between exact Bellman residual evaluations.
pub const RESIDUAL_STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub gamma: f64,
    /// Ridge added to the normal equations.
    pub mu: f64,
    /// Stop once `||H^{i+1} - H^i||_F <= eps_rl`.
    pub eps_rl: f64,
    pub max_iters: usize,
    /// History length `N`.
    pub horizon: usize,
    /// Initial kernel; identity when absent.
    #[serde(skip)]
    pub h0: Option<DMatrix<f64>>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        use crate::fixtures::data_driven_params as dd;
        Self {
            gamma: dd::GAMMA,
            mu: dd::MU,
            eps_rl: dd::EPS_RL,
            max_iters: dd::MAX_ITERS,
            horizon: dd::HORIZON,
            h0: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", format!("must be positive, got {}", self.mu));
        }
        if !(self.eps_rl > 0.0) {
            return bad("eps_rl", format!("must be positive, got {}", self.eps_rl));
        }
        if self.max_iters == 0 || self.horizon == 0 {
            return bad("max_iters/horizon", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub kernel: KernelMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `||H^{i+1} - H^i||_F` per iteration.
    pub deltas: Vec<f64>,
    /// `(i, r)` with `r` the mean absolute Bellman residual of `H^i`,
    /// every [`RESIDUAL_STRIDE`] iterations and for the returned kernel.
    pub residuals: Vec<(usize, f64)>,
    /// Ridge actually used in the factorization.
    pub jitter: f64,
}

impl TrainingOutcome {
    pub fn final_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(f64::NAN)
    }
}

/// Lifted regressors of one dataset with the factorized normal equations.
pub struct LiftedRegression {
    layout: ZLayout,
    /// `Z(t)` per row.
    z: DMatrix<f64>,
    /// History part of `Z(t+1)` per row.
    next_hist: DMatrix<f64>,
    /// `y(t) - r(t)` per row.
    err: DMatrix<f64>,
    /// `u(t)` per row.
    u: DMatrix<f64>,
    /// `sum_t phi(Z(t)) phi(w(t+1))^T` over index pairs of `Z` (rows) and of
    /// the next history `w` (columns). Turns the Bellman target into a
    /// product with the policy-reduced kernel.
    cross: Mat<f64>,
    hist_pairs: Vec<(usize, usize)>,
    /// Lower Cholesky factor of the reduced normal equations.
    factor: Mat<f64>,
    /// `1` for diagonal pairs, `sqrt(2)` otherwise.
    scale: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    jitter: f64,
    setup_seconds: f64,
}

fn pair_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

impl LiftedRegression {
    /// Builds regressors for `t = N, ..., M-2` and factorizes `L + mu I`,
    /// raising the ridge tenfold on failure up to `mu * MAX_JITTER_FACTOR`.
    pub fn new(dataset: &IoDataset, horizon: usize, mu: f64) -> Result<Self> {
        let start = Instant::now();
        dataset.validate()?;
        let layout = ZLayout::new(horizon, dataset.m(), dataset.p())?;
        let need = layout.min_samples().max(horizon + 2);
        if dataset.len() < need {
            return Err(Error::InsufficientData {
                available: dataset.len(),
                required: need,
            });
        }
        let (d, hd, m, p) = (layout.dim(), layout.history_dim(), layout.m, layout.p);
        let rows = dataset.len() - horizon - 1;
        let mut z = DMatrix::zeros(rows, d);
        let mut next_hist = DMatrix::zeros(rows, hd);
        let mut err = DMatrix::zeros(rows, p);
        let mut u = DMatrix::zeros(rows, m);
        let fill_hist = |dst: &mut DMatrix<f64>, row: usize, t: usize| {
            for k in 1..=horizon {
                for j in 0..m {
                    dst[(row, (k - 1) * m + j)] = dataset.u[t - k][j];
                }
                for j in 0..p {
                    dst[(row, layout.ybar().start + (k - 1) * p + j)] = dataset.y[t - k][j];
                }
            }
            for j in 0..p {
                dst[(row, layout.r_lag().start + j)] = dataset.r[t - horizon][j];
            }
        };
        for row in 0..rows {
            let t = row + horizon;
            fill_hist(&mut z, row, t);
            fill_hist(&mut next_hist, row, t + 1);
            for j in 0..m {
                z[(row, hd + j)] = dataset.u[t][j];
                u[(row, j)] = dataset.u[t][j];
            }
            for j in 0..p {
                err[(row, j)] = dataset.y[t][j] - dataset.r[t][j];
            }
        }

        let pairs = index_pairs(d);
        let hist_pairs = index_pairs(hd);
        let cross = cross_gram(&z, &pairs, &next_hist, &hist_pairs);
        let scale: Vec<f64> = pairs.iter().map(|&(i, j)| if i == j { 1.0 } else { SQRT_2 }).collect();
        let gram = symmetric_gram(&z, &pairs);
        let (factor, jitter) = factorize(gram, &scale, mu)?;
        Ok(Self {
            layout,
            z,
            next_hist,
            err,
            u,
            cross,
            hist_pairs,
            factor,
            scale,
            pairs,
            jitter,
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn layout(&self) -> ZLayout {
        self.layout
    }
    pub fn samples(&self) -> usize {
        self.z.nrows()
    }
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
    pub fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }
    /// Lifted regressors `Z(t)`, one per row.
    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Stage costs `(y - r)^T Q (y - r) + u^T R u` per sample.
    pub fn stage_costs(&self, w: &CostWeights) -> Result<DVector<f64>> {
        if w.p() != self.layout.p || w.m() != self.layout.m {
            return Err(crate::error::dim_err("weights", format!("{:?}", self.layout), "mismatch"));
        }
        let eq = &self.err * w.q();
        let ur = &self.u * w.r();
        Ok(DVector::from_fn(self.samples(), |t, _| {
            eq.row(t).dot(&self.err.row(t)) + ur.row(t).dot(&self.u.row(t))
        }))
    }

    /// Solves the regularized normal equations for targets `c` and
    /// symmetrizes the result.
    pub fn fit(&self, c: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.solve_vech(self.weighted_vech(c)?)
    }

    /// Upper-triangle entries of `sum_t c(t) Z(t) Z(t)^T`.
    fn weighted_vech(&self, c: &DVector<f64>) -> Result<Mat<f64>> {
        if c.len() != self.samples() {
            return Err(crate::error::dim_err("targets", self.samples(), c.len()));
        }
        let mut zc = self.z.clone();
        for (mut row, &ct) in zc.row_iter_mut().zip(c.iter()) {
            row *= ct;
        }
        let s = self.z.transpose() * zc;
        Ok(Mat::from_fn(self.pairs.len(), 1, |k, _| {
            let (i, j) = self.pairs[k];
            s[(i, j)]
        }))
    }

    fn solve_vech(&self, mut rhs: Mat<f64>) -> Result<DMatrix<f64>> {
        for (k, &sc) in self.scale.iter().enumerate() {
            rhs[(k, 0)] *= sc;
        }
        let mut mem = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(self.pairs.len(), 1, Par::Seq));
        llt::solve::solve_in_place_with_conj(self.factor.as_ref(), Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut mem));
        let d = self.layout.dim();
        let h = DMatrix::from_fn(d, d, |i, j| {
            let k = pair_index(i, j);
            rhs[(k, 0)] / self.scale[k]
        });
        crate::linalg::ensure_finite(&h, "fitted kernel")?;
        Ok(h)
    }

    /// `E^T H E` with `E = [I; -G]`, so that `w^T (E^T H E) w` is the value
    /// of history `w` under the greedy input of `H`.
    fn policy_reduced(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (hd, m) = (self.layout.history_dim(), self.layout.m);
        let gain = KernelMatrix::new(self.layout, h.clone())?.feedback_gain()?;
        let mut e = DMatrix::zeros(hd + m, hd);
        e.view_mut((0, 0), (hd, hd)).fill_with_identity();
        e.view_mut((hd, 0), (m, hd)).copy_from(&(-gain));
        Ok(e.transpose() * h * e)
    }

    fn bellman_residual(&self, h: &DMatrix<f64>, reduced: &DMatrix<f64>, stage: &DVector<f64>, gamma: f64) -> Result<f64> {
        let target = stage + Self::quadratic_forms(&self.next_hist, reduced) * gamma;
        crate::linalg::ensure_finite_vec(&target, "Bellman targets")?;
        Ok((Self::quadratic_forms(&self.z, h) - target).abs().mean())
    }

    /// `Z^T H Z` for every sample of `rows`.
    fn quadratic_forms(rows: &DMatrix<f64>, h: &DMatrix<f64>) -> DVector<f64> {
        let zh = rows * h;
        DVector::from_fn(rows.nrows(), |t, _| zh.row(t).dot(&rows.row(t)))
    }

    /// Value iteration from `cfg.h0` (identity by default).
    pub fn train(&self, cfg: &TrainingConfig, w: &CostWeights) -> Result<TrainingOutcome> {
        cfg.validate()?;
        if cfg.horizon != self.layout.horizon {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("regression built for N = {}, config has {}", self.layout.horizon, cfg.horizon),
            });
        }
        let d = self.layout.dim();
        let stage = self.stage_costs(w)?;
        let stage_vech = self.weighted_vech(&stage)?;
        let mut h = match &cfg.h0 {
            Some(h0) => KernelMatrix::new(self.layout, h0.clone())?.into_matrix(),
            None => DMatrix::identity(d, d),
        };
        let mut deltas = Vec::new();
        let mut residuals = Vec::new();
        let mut best: Option<(f64, DMatrix<f64>)> = None;
        let mut wv = Mat::<f64>::zeros(self.hist_pairs.len(), 1);

        for iter in 1..=cfg.max_iters {
            let reduced = self.policy_reduced(&h)?;
            if (iter - 1) % RESIDUAL_STRIDE == 0 {
                let res = self.bellman_residual(&h, &reduced, &stage, cfg.gamma)?;
                residuals.push((iter - 1, res));
                if best.as_ref().is_none_or(|(r, _)| res < *r) {
                    best = Some((res, h.clone()));
                }
            }
            // sum_t c(t) Z Z^T with c = stage + gamma w^T reduced w.
            for (b, &(k, l)) in self.hist_pairs.iter().enumerate() {
                wv[(b, 0)] = if k == l { reduced[(k, k)] } else { reduced[(k, l)] + reduced[(l, k)] };
            }
            let mut rhs = stage_vech.clone();
            matmul(rhs.as_mut(), Accum::Add, self.cross.as_ref(), wv.as_ref(), cfg.gamma, Par::Seq);
            let next = self.solve_vech(rhs)?;
            let delta = (&next - &h).norm();
            deltas.push(delta);
            h = next;
            if delta <= cfg.eps_rl {
                let res = self.bellman_residual(&h, &self.policy_reduced(&h)?, &stage, cfg.gamma)?;
                residuals.push((iter, res));
                return Ok(TrainingOutcome {
                    kernel: KernelMatrix::new(self.layout, h)?,
                    iterations: iter,
                    converged: true,
                    deltas,
                    residuals,
                    jitter: self.jitter,
                });
            }
        }
        let res = self.bellman_residual(&h, &self.policy_reduced(&h)?, &stage, cfg.gamma)?;
        residuals.push((cfg.max_iters, res));
        let h = match best {
            Some((r, bh)) if r < res => bh,
            _ => h,
        };
        Ok(TrainingOutcome {
            kernel: KernelMatrix::new(self.layout, h)?,
            iterations: cfg.max_iters,
            converged: false,
            deltas,
            residuals,
            jitter: self.jitter,
        })
    }
}

/// Learns the kernel of `dataset` under weights `w`.
pub fn value_iteration(dataset: &IoDataset, cfg: &TrainingConfig, w: &CostWeights) -> Result<TrainingOutcome> {
    cfg.validate()?;
    LiftedRegression::new(dataset, cfg.horizon, cfg.mu)?.train(cfg, w)
}

/// `(lo, hi)` with `lo <= hi < d`, ordered by [`pair_index`].
fn index_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|hi| (0..=hi).map(move |lo| (lo, hi))).collect()
}

/// Rows `start..start + len` of `Psi[t, (i,j)] = z_i z_j`.
fn fill_pair_features(dst: &mut Mat<f64>, z: &DMatrix<f64>, pairs: &[(usize, usize)], start: usize, len: usize) {
    for (col, &(i, j)) in pairs.iter().enumerate() {
        for r in 0..len {
            dst[(r, col)] = z[(start + r, i)] * z[(start + r, j)];
        }
    }
}

/// Lower triangle of `Psi^T Psi` where `Psi[t, (i,j)] = z_i z_j`, `i <= j`.
fn symmetric_gram(z: &DMatrix<f64>, pairs: &[(usize, usize)]) -> Mat<f64> {
    let s = pairs.len();
    let mut gram = Mat::<f64>::zeros(s, s);
    let mut psi = Mat::<f64>::zeros(GRAM_CHUNK.min(z.nrows()), s);
    let mut start = 0;
    while start < z.nrows() {
        let len = GRAM_CHUNK.min(z.nrows() - start);
        fill_pair_features(&mut psi, z, pairs, start, len);
        let block = psi.as_ref().subrows(0, len);
        triangular::matmul(
            gram.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            block.transpose(),
            BlockStructure::Rectangular,
            block,
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
        start += len;
    }
    gram
}

/// `Psi_z^T Psi_w` for the pair features of two row-aligned sample sets.
fn cross_gram(z: &DMatrix<f64>, z_pairs: &[(usize, usize)], w: &DMatrix<f64>, w_pairs: &[(usize, usize)]) -> Mat<f64> {
    let chunk = GRAM_CHUNK.min(z.nrows());
    let mut out = Mat::<f64>::zeros(z_pairs.len(), w_pairs.len());
    let mut psi_z = Mat::<f64>::zeros(chunk, z_pairs.len());
    let mut psi_w = Mat::<f64>::zeros(chunk, w_pairs.len());
    let mut start = 0;
    while start < z.nrows() {
        let len = GRAM_CHUNK.min(z.nrows() - start);
        fill_pair_features(&mut psi_z, z, z_pairs, start, len);
        fill_pair_features(&mut psi_w, w, w_pairs, start, len);
        matmul(
            out.as_mut(),
            Accum::Add,
            psi_z.as_ref().subrows(0, len).transpose(),
            psi_w.as_ref().subrows(0, len),
            1.0,
            Par::Seq,
        );
        start += len;
    }
    out
}

/// Cholesky factor of `D G D + jitter I` with `D = diag(scale)`, raising
/// the jitter tenfold from `mu` until it succeeds.
fn factorize(gram: Mat<f64>, scale: &[f64], mu: f64) -> Result<(Mat<f64>, f64)> {
    let s = scale.len();
    let mut mem = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(s, Par::Seq, Default::default()));
    let mut jitter = mu;
    let mut factor = Mat::<f64>::zeros(s, s);
    loop {
        for b in 0..s {
            for a in b..s {
                factor[(a, b)] = scale[a] * scale[b] * gram[(a, b)];
            }
            factor[(b, b)] += jitter;
        }
        let stack = MemStack::new(&mut mem);
        if llt::factor::cholesky_in_place(factor.as_mut(), Default::default(), Par::Seq, stack, Default::default()).is_ok() {
            return Ok((factor, jitter));
        }
        if jitter >= mu * MAX_JITTER_FACTOR {
            return Err(Error::CholeskyFailed { jitter });
        }
        jitter *= 10.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datadriven::kron_row;
    use crate::datagen::{generate_dataset, ProbingNoiseConfig, StabilizingGain};
    use crate::statespace::{ReferenceGenerator, StateSpaceModel};
    use nalgebra::{dmatrix, dvector};

    fn small_dataset(samples: usize) -> IoDataset {
        let model = StateSpaceModel::new(dmatrix![0.8, 0.2; -0.1, 0.7], dmatrix![1.0; 0.5], dmatrix![1.0, 0.3]).unwrap();
        let gain = StabilizingGain::new(dmatrix![0.1, 0.05], &model).unwrap();
        let noise = ProbingNoiseConfig { seed: 5, ..Default::default() };
        let gen = ReferenceGenerator::constant(dvector![2.0]).unwrap();
        generate_dataset(&model, &gain, &noise, &gen, samples, &dvector![1.0, -1.0]).unwrap()
    }

    #[test]
    fn pair_index_is_a_bijection() {
        let d = 7;
        let mut seen = vec![false; d * (d + 1) / 2];
        for j in 0..d {
            for i in 0..=j {
                let k = pair_index(i, j);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(pair_index(j, i), k);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn fit_matches_dense_kronecker_solve() {
        let ds = small_dataset(400);
        let mu = 1e-4;
        let reg = LiftedRegression::new(&ds, 1, mu).unwrap();
        assert_eq!(reg.jitter(), mu);
        let d = reg.layout().dim();
        let c = DVector::from_fn(reg.samples(), |t, _| 1.0 + (t as f64 * 0.37).sin());

        // Oracle: explicit d^2 rows, dense normal equations.
        let mut l = DMatrix::identity(d * d, d * d) * mu;
        let mut rhs = DVector::zeros(d * d);
        for t in 0..reg.samples() {
            let phi = kron_row(&reg.regressors().row(t).transpose());
            l += &phi * phi.transpose();
            rhs += &phi * c[t];
        }
        let h = l.cholesky().unwrap().solve(&rhs);
        let mut expect = DMatrix::from_column_slice(d, d, h.as_slice());
        crate::linalg::symmetrize(&mut expect);

        let got = reg.fit(&c).unwrap();
        let scale = expect.amax().max(1.0);
        assert!((&got - &expect).amax() <= 1e-6 * scale, "{}", (&got - &expect).amax());
        assert_eq!(got, got.transpose());
    }

    #[test]
    fn training_matches_naive_value_iteration() {
        let ds = small_dataset(300);
        let horizon = 2;
        let reg = LiftedRegression::new(&ds, horizon, 1e-4).unwrap();
        let w = CostWeights::identity(1, 1, 0.95).unwrap();
        let cfg = TrainingConfig {
            gamma: 0.95,
            horizon,
            max_iters: 5,
            eps_rl: 1e-300,
            ..Default::default()
        };
        let fast = reg.train(&cfg, &w).unwrap();

        // Per-sample targets with the greedy input substituted at t + 1.
        let layout = reg.layout();
        let stage = reg.stage_costs(&w).unwrap();
        let mut h = DMatrix::identity(layout.dim(), layout.dim());
        let mut deltas = vec![];
        for _ in 0..5 {
            let k = KernelMatrix::new(layout, h.clone()).unwrap();
            let target = DVector::from_fn(reg.samples(), |t, _| {
                let hist = crate::datadriven::HistoryWindow::from_series(layout, &ds.u, &ds.y, &ds.r, t + horizon + 1).unwrap();
                let z = hist.with_input(&k.policy(&hist).unwrap()).unwrap();
                stage[t] + 0.95 * (z.transpose() * &h * &z)[(0, 0)]
            });
            let next = reg.fit(&target).unwrap();
            deltas.push((&next - &h).norm());
            h = next;
        }
        for (a, b) in fast.deltas.iter().zip(&deltas) {
            assert!((a - b).abs() <= 1e-6 * b.max(1.0), "{a} vs {b}");
        }
        let scale = h.amax().max(1.0);
        let got = fast.kernel.matrix();
        assert!((got - &h).amax() <= 1e-6 * scale);
    }

    #[test]
    fn rejects_short_datasets() {
        let ds = small_dataset(10);
        assert!(matches!(LiftedRegression::new(&ds, 2, 1e-4), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        assert!(TrainingConfig { mu: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { gamma: 1.2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = small_dataset(300);
        let cfg = TrainingConfig {
            horizon: 2,
            max_iters: 30,
            ..Default::default()
        };
        let w = CostWeights::identity(1, 1, cfg.gamma).unwrap();
        let a = value_iteration(&ds, &cfg, &w).unwrap();
        let b = value_iteration(&ds, &cfg, &w).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.deltas, b.deltas);
    }
}
