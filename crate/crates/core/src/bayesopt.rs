//! Gaussian-process Bayesian optimization of diagonal cost weights.
//!
//! Zero prior mean, unit squared-exponential kernel and a lower confidence
//! rule `mu(x) - eps k(x)` minimized over a Latin-hypercube candidate pool.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::statespace::CostWeights;
use crate::trace::SimulationTrace;

/// Fitness assigned to parameter vectors whose controller fails.
pub const PENALTY: f64 = 1e12;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Box bounds on `theta = [q_1..q_p, r_1..r_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = Self { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(dim_err("search domain", "matching non-empty bounds", format!("{} / {}", self.lower.len(), self.upper.len())));
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(*l > 0.0 && l < u && u.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    reason: format!("need 0 < lower < upper, got [{l}, {u}]"),
                });
            }
        }
        Ok(())
    }

    /// Q in `[q_lo, q_hi]`, R in `[r_lo, r_hi]`.
    pub fn weights(p: usize, m: usize, q: (f64, f64), r: (f64, f64)) -> Result<Self> {
        let mut lower = vec![q.0; p];
        lower.extend(std::iter::repeat_n(r.0, m));
        let mut upper = vec![q.1; p];
        upper.extend(std::iter::repeat_n(r.1, m));
        Self::new(lower, upper)
    }

    /// Q in `[0.01, 1]`, R in `[0.01, 0.4]`.
    pub fn observer_preset(p: usize, m: usize) -> Self {
        Self::weights(p, m, (0.01, 1.0), (0.01, 0.4)).expect("valid preset")
    }

    /// Q in `[0.1, 1]`, R in `[0.1, 0.4]`.
    pub fn data_driven_preset(p: usize, m: usize) -> Self {
        Self::weights(p, m, (0.1, 1.0), (0.1, 0.4)).expect("valid preset")
    }

    /// Named presets `bounds-observer` and `bounds-datadriven`.
    pub fn preset(name: &str, p: usize, m: usize) -> Option<Self> {
        match name {
            "bounds-observer" => Some(Self::observer_preset(p, m)),
            "bounds-datadriven" => Some(Self::data_driven_preset(p, m)),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    fn uniform(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| rng.random_range(self.lower[i]..self.upper[i]))
    }

    /// `count` stratified points, one per stratum in every coordinate.
    pub fn latin_hypercube(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let d = self.dim();
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut perm: Vec<usize> = (0..count).collect();
            perm.shuffle(rng);
            cols.push(perm);
        }
        (0..count)
            .map(|i| {
                DVector::from_fn(d, |k, _| {
                    let frac = (cols[k][i] as f64 + rng.random::<f64>()) / count as f64;
                    self.lower[k] + frac * (self.upper[k] - self.lower[k])
                })
            })
            .collect()
    }
}

/// Diagonal weights from `theta = [q; r]`.
pub fn weights_from_theta(theta: &DVector<f64>, p: usize, m: usize, gamma: f64) -> Result<CostWeights> {
    if theta.len() != p + m {
        return Err(dim_err("theta", p + m, theta.len()));
    }
    let t = theta.as_slice();
    CostWeights::from_diagonals(&t[..p], &t[p..], gamma)
}

/// `exp(-||a - b||^2)`.
pub fn se_kernel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (-(a - b).norm_squared()).exp()
}

/// `sum_{t < horizon} gamma^t (|y - r|^2 + |u|^2)`.
pub fn fitness(trace: &SimulationTrace, gamma: f64, horizon: usize) -> Result<f64> {
    trace.unweighted_index(gamma, horizon)
}

/// Maps failures and non-finite values to [`PENALTY`].
pub fn fitness_or_penalty(value: Result<f64>) -> f64 {
    match value {
        Ok(v) if v.is_finite() => v.min(PENALTY),
        _ => PENALTY,
    }
}

/// Observations and the factorized Gram matrix.
#[derive(Debug, Clone)]
pub struct GpState {
    dim: usize,
    points: Vec<DVector<f64>>,
    values: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpState {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            values: Vec::new(),
            chol: None,
            alpha: DVector::zeros(0),
            jitter: 0.0,
        }
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    /// Diagonal jitter used in the current factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let l = self.points.len();
        DMatrix::from_fn(l, l, |i, j| se_kernel(&self.points[i], &self.points[j]))
    }

    pub fn add(&mut self, x: DVector<f64>, value: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(dim_err("GP point", self.dim, x.len()));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("GP observation"));
        }
        self.points.push(x);
        self.values.push(value);
        self.refactor()
    }

    fn refactor(&mut self) -> Result<()> {
        let gram = self.gram();
        let l = gram.nrows();
        let mut jitter = JITTER_START;
        loop {
            let k = &gram + DMatrix::identity(l, l) * jitter;
            if let Some(ch) = k.cholesky() {
                self.alpha = ch.solve(&DVector::from_column_slice(&self.values));
                self.chol = Some(ch);
                self.jitter = jitter;
                return Ok(());
            }
            if jitter >= JITTER_MAX {
                return Err(Error::Singular { context: "GP Gram matrix" });
            }
            jitter *= 10.0;
        }
    }

    /// Posterior mean and variance at `x`; the variance is clamped at 0.
    pub fn posterior(&self, x: &DVector<f64>) -> Result<(f64, f64)> {
        if x.len() != self.dim {
            return Err(dim_err("GP query", self.dim, x.len()));
        }
        let Some(ch) = &self.chol else {
            return Ok((0.0, 1.0));
        };
        let kx = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| se_kernel(x, p)));
        let mean = kx.dot(&self.alpha);
        let v = ch.solve(&kx);
        let var = (1.0 - kx.dot(&v)).max(0.0);
        Ok((mean, var))
    }
}

/// `mu(x) - eps k(x)`.
pub fn ucb(state: &GpState, x: &DVector<f64>, epsilon: f64) -> Result<f64> {
    let (mean, var) = state.posterior(x)?;
    Ok(mean - epsilon * var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub epsilon: f64,
    pub candidate_count: usize,
    pub iterations: usize,
    pub init_samples: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            epsilon: 2.0,
            candidate_count: 2048,
            iterations: 100,
            init_samples: 50,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must be non-negative".into(),
            });
        }
        if self.candidate_count == 0 || self.init_samples == 0 {
            return Err(Error::InvalidParameter {
                name: "candidate_count/init_samples",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minimizes [`ucb`] over a seeded Latin-hypercube pool; `round` selects
/// the pool so consecutive proposals see fresh candidates.
pub fn propose_next(state: &GpState, cfg: &AcquisitionConfig, domain: &SearchDomain, round: usize) -> Result<DVector<f64>> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, round as u64 + 1);
    let pool = domain.latin_hypercube(cfg.candidate_count, &mut rng);
    best_of(state, &pool, cfg.epsilon)
}

/// Minimizer of [`ucb`] over an explicit candidate list.
pub fn best_of(state: &GpState, pool: &[DVector<f64>], epsilon: f64) -> Result<DVector<f64>> {
    let mut best: Option<(f64, &DVector<f64>)> = None;
    for x in pool {
        let a = ucb(state, x, epsilon)?;
        if best.is_none_or(|(b, _)| a < b) {
            best = Some((a, x));
        }
    }
    best.map(|(_, x)| x.clone()).ok_or(Error::InvalidParameter {
        name: "candidate pool",
        reason: "empty".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoRecord {
    pub iter: usize,
    pub phase: Phase,
    pub theta: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoOutcome {
    pub best: DVector<f64>,
    pub best_fitness: f64,
    pub history: Vec<BoRecord>,
}

/// Random initial design, then `iterations` propose/evaluate rounds.
/// Returns the evaluated point with the lowest posterior mean.
pub fn optimize<F>(mut evaluator: F, domain: &SearchDomain, cfg: &AcquisitionConfig) -> Result<BoOutcome>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    cfg.validate()?;
    domain.validate()?;
    let mut state = GpState::new(domain.dim());
    let mut history = Vec::with_capacity(cfg.init_samples + cfg.iterations);
    let mut rng = rng_for(cfg.seed, 0);
    let mut record = |state: &mut GpState, history: &mut Vec<BoRecord>, x: DVector<f64>, phase| -> Result<()> {
        let f = fitness_or_penalty(Ok(evaluator(&x)));
        history.push(BoRecord {
            iter: history.len(),
            phase,
            theta: x.iter().copied().collect(),
            fitness: f,
        });
        state.add(x, f)
    };
    for _ in 0..cfg.init_samples {
        let x = domain.uniform(&mut rng);
        record(&mut state, &mut history, x, Phase::Init)?;
    }
    for round in 0..cfg.iterations {
        let x = propose_next(&state, cfg, domain, round)?;
        record(&mut state, &mut history, x, Phase::Acquisition)?;
    }

    let mut best = 0;
    let mut best_mean = f64::INFINITY;
    for (i, x) in state.points().iter().enumerate() {
        let (mean, _) = state.posterior(x)?;
        if mean < best_mean {
            best_mean = mean;
            best = i;
        }
    }
    Ok(BoOutcome {
        best: state.points()[best].clone(),
        best_fitness: state.values()[best],
        history,
    })
}
