//! Model-based tracking: Lyapunov/gain iteration and the observer-in-the-loop run.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augmented::AugmentedSystem;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, ensure_shape};
use crate::observer::LuenbergerObserver;
use crate::plant::Plant;
use crate::statespace::{CostWeights, ReferenceGenerator};
use crate::trace::SimulationTrace;

/// Residual bound for an accepted Lyapunov solution.
pub const LYAPUNOV_TOL: f64 = 1e-9;
pub const LYAPUNOV_MAX_SWEEPS: usize = 100_000;
pub const MAX_OUTER_ITERS: usize = 1000;

/// Converged value kernel and gain, `u = -K [x; r]`.
#[derive(Debug, Clone)]
pub struct LqtSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
    pub final_delta: f64,
    /// Gains `K^0, K^1, ...` visited by the iteration.
    pub gain_history: Vec<DMatrix<f64>>,
}

fn check_gain(aug: &AugmentedSystem, w: &CostWeights, k: &DMatrix<f64>) -> Result<()> {
    ensure_shape(k, aug.m(), aug.dim(), "gain K")?;
    if w.m() != aug.m() {
        return Err(dim_err("weights R", aug.m(), w.m()));
    }
    Ok(())
}

/// Spectral radius of `sqrt(gamma) (T - B1 K)`.
pub fn discounted_spectral_radius(aug: &AugmentedSystem, gamma: f64, k: &DMatrix<f64>) -> f64 {
    gamma.sqrt() * linalg::spectral_radius(&(aug.t() - aug.b1() * k))
}

/// Solves `P = Q1 + K^T R K + gamma (T - B1 K)^T P (T - B1 K)` by fixed-point
/// sweeps from `P = 0`.
pub fn lyapunov_fixed_point(aug: &AugmentedSystem, w: &CostWeights, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_gain(aug, w, k)?;
    let acl = aug.t() - aug.b1() * k;
    let s = aug.q1() + k.transpose() * w.r() * k;
    let g = w.gamma();
    let mut p = DMatrix::zeros(aug.dim(), aug.dim());
    for _ in 0..LYAPUNOV_MAX_SWEEPS {
        let mut next = &s + (acl.transpose() * &p * &acl) * g;
        linalg::symmetrize(&mut next);
        let change = (&next - &p).norm();
        p = next;
        if !change.is_finite() {
            break;
        }
        if change <= LYAPUNOV_TOL {
            return Ok(p);
        }
    }
    Err(Error::LyapunovDivergence {
        iterations: LYAPUNOV_MAX_SWEEPS,
        spectral_radius: discounted_spectral_radius(aug, g, k),
    })
}

/// Frobenius norm of the Lyapunov residual of `p` under gain `k`.
pub fn lyapunov_residual(aug: &AugmentedSystem, w: &CostWeights, k: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let acl = aug.t() - aug.b1() * k;
    let rhs = aug.q1() + k.transpose() * w.r() * k + (acl.transpose() * p * &acl) * w.gamma();
    (p - rhs).norm()
}

/// `K = (R + gamma B1^T P B1)^{-1} gamma B1^T P T`.
pub fn gain_update(aug: &AugmentedSystem, w: &CostWeights, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_shape(p, aug.dim(), aug.dim(), "value kernel P")?;
    let g = w.gamma();
    let bp = aug.b1().transpose() * p;
    let lhs = w.r() + &bp * aug.b1() * g;
    let rhs = &bp * aug.t() * g;
    linalg::solve(&lhs, &rhs, "R + gamma B1^T P B1")
}

/// `m x (n+p)` matrix of iid draws with mean 0 and the given variance.
pub fn random_initial_gain(m: usize, dim: usize, variance: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    DMatrix::from_fn(m, dim, |_, _| normal.sample(&mut rng))
}

/// Alternates policy evaluation and gain update until
/// `||K^j - K^{j-1}||_F <= eps`.
///
/// While the current gain is not yet stabilizing in the discounted sense
/// the evaluation step is a single value-iteration sweep from the previous
/// kernel; once it stabilizes, the Lyapunov equation is solved in full.
pub fn solve_lqt(aug: &AugmentedSystem, w: &CostWeights, k0: &DMatrix<f64>, eps: f64) -> Result<LqtSolution> {
    check_gain(aug, w, k0)?;
    let g = w.gamma();
    let mut k = k0.clone();
    let mut p = DMatrix::zeros(aug.dim(), aug.dim());
    let mut history = vec![k.clone()];
    let mut delta = f64::INFINITY;
    for j in 1..=MAX_OUTER_ITERS {
        if discounted_spectral_radius(aug, g, &k) < 1.0 {
            p = lyapunov_fixed_point(aug, w, &k)?;
        } else {
            let acl = aug.t() - aug.b1() * &k;
            p = aug.q1() + k.transpose() * w.r() * &k + (acl.transpose() * &p * &acl) * g;
            linalg::symmetrize(&mut p);
            linalg::ensure_finite(&p, "value kernel P")?;
        }
        let next = gain_update(aug, w, &p)?;
        delta = (&next - &k).norm();
        k = next;
        history.push(k.clone());
        if delta <= eps {
            return Ok(LqtSolution {
                p,
                k,
                iterations: j,
                final_delta: delta,
                gain_history: history,
            });
        }
    }
    Err(Error::NotConverged {
        what: "LQT gain iteration",
        iterations: MAX_OUTER_ITERS,
        last_delta: delta,
    })
}

/// Closed loop with `u = -K [xhat; r]`; the observer is fed `y` only.
pub fn run_observer_closed_loop<P: Plant>(
    plant: &mut P,
    gen: &ReferenceGenerator,
    w: &CostWeights,
    solution: &LqtSolution,
    obs: &mut LuenbergerObserver,
    steps: usize,
) -> Result<SimulationTrace> {
    let n = obs.model().n();
    if plant.output_dim() != gen.p() || plant.input_dim() != solution.k.nrows() {
        return Err(dim_err("closed loop", "plant matching controller", "mismatch"));
    }
    ensure_shape(&solution.k, plant.input_dim(), n + gen.p(), "gain K")?;
    let mut trace = SimulationTrace::new(w.gamma());
    let mut r = gen.r0().clone();
    for _ in 0..steps {
        let y = plant.output();
        let xhat = obs.estimate().clone();
        let mut big = DVector::zeros(n + gen.p());
        big.rows_mut(0, n).copy_from(&xhat);
        big.rows_mut(n, gen.p()).copy_from(&r);
        let u = -(&solution.k * big);
        let cost = w.stage_cost(&y, &r, &u)?;
        trace.push(
            plant.diagnostic_state(),
            Some(xhat),
            y.clone(),
            Some(obs.predicted_output()),
            u.clone(),
            r.clone(),
            cost,
        )?;
        obs.observe_step(&u, &y)?;
        plant.apply(&u)?;
        r = gen.step(&r)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::augment;
    use crate::fixtures;
    use crate::statespace::StateSpaceModel;
    use nalgebra::dmatrix;

    fn scalar_aug(t: f64, b: f64, q: f64) -> AugmentedSystem {
        AugmentedSystem::from_parts(dmatrix![t], dmatrix![b], dmatrix![q], 1).unwrap()
    }

    /// Independent scalar Riccati iteration `p <- q + a^2 p - (a b p)^2 / (r + b^2 p)`.
    fn riccati_scalar(a: f64, b: f64, q: f64, r: f64) -> (f64, f64) {
        let mut p = 0.0;
        for _ in 0..100_000 {
            p = q + a * a * p - (a * b * p).powi(2) / (r + b * b * p);
        }
        (p, a * b * p / (r + b * b * p))
    }

    #[test]
    fn geometric_series_kernel() {
        let aug = scalar_aug(0.5, 0.0, 1.0);
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        let p = lyapunov_fixed_point(&aug, &w, &dmatrix![0.0]).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_give_zero_kernel() {
        let aug = scalar_aug(0.5, 1.0, 0.0);
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        // R enters through K^T R K, so use K = 0.
        let p = lyapunov_fixed_point(&aug, &w, &dmatrix![0.0]).unwrap();
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn gain_update_trivial_cases() {
        let aug = scalar_aug(0.9, 1.0, 1.0);
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        assert_eq!(gain_update(&aug, &w, &dmatrix![0.0]).unwrap(), dmatrix![0.0]);
        let aug0 = scalar_aug(0.9, 0.0, 1.0);
        assert_eq!(gain_update(&aug0, &w, &dmatrix![5.0]).unwrap(), dmatrix![0.0]);
    }

    #[test]
    fn scalar_solution_matches_riccati_oracle() {
        let aug = scalar_aug(0.9, 1.0, 1.0);
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        let sol = solve_lqt(&aug, &w, &dmatrix![0.0], 1e-12).unwrap();
        let (p, k) = riccati_scalar(0.9, 1.0, 1.0, 1.0);
        assert!((sol.k[(0, 0)] - k).abs() < 1e-8, "{} vs {k}", sol.k[(0, 0)]);
        assert!((sol.p[(0, 0)] - p).abs() < 1e-8, "{} vs {p}", sol.p[(0, 0)]);
        let kk = gain_update(&aug, &w, &sol.p).unwrap();
        assert!((kk - &sol.k).amax() < 1e-8);
    }

    #[test]
    fn no_actuation_gives_zero_gain() {
        let aug = scalar_aug(0.5, 0.0, 1.0);
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        let sol = solve_lqt(&aug, &w, &dmatrix![0.0], 1e-3).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.k, dmatrix![0.0]);
    }

    #[test]
    fn random_gain_is_seeded() {
        let a = random_initial_gain(7, 11, 10.0, 3);
        assert_eq!(a, random_initial_gain(7, 11, 10.0, 3));
        assert_ne!(a, random_initial_gain(7, 11, 10.0, 4));
        let var = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!(var > 3.0 && var < 30.0);
    }

    #[test]
    fn paper_solution_is_consistent() {
        let model = fixtures::paper_model();
        let gen = fixtures::paper_reference_generator();
        let w = CostWeights::identity(5, 7, 0.99).unwrap();
        let aug = augment(&model, &gen, &w).unwrap();
        let k0 = random_initial_gain(7, 11, 10.0, 0);
        let sol = solve_lqt(&aug, &w, &k0, 0.01).unwrap();
        // P evaluates the gain before the final update.
        let evaluated = &sol.gain_history[sol.gain_history.len() - 2];
        assert!(lyapunov_residual(&aug, &w, evaluated, &sol.p) <= 1e-8);
        assert!((gain_update(&aug, &w, &sol.p).unwrap() - &sol.k).amax() <= 1e-8);
        assert!(linalg::min_symmetric_eigenvalue(&sol.p) > 0.0);
        assert!((&sol.p - sol.p.transpose()).norm() <= 1e-10);
        assert!(discounted_spectral_radius(&aug, 0.99, &sol.k) < 1.0);
    }

    #[test]
    fn equilibrium_is_held() {
        // Zero gain, exact estimate and r = C x0 on a static plant.
        let model = StateSpaceModel::new(DMatrix::identity(2, 2), DMatrix::identity(2, 1), DMatrix::identity(2, 2)).unwrap();
        let x0 = DVector::from_vec(vec![3.0, 4.0]);
        let gen = ReferenceGenerator::constant(x0.clone()).unwrap();
        let w = CostWeights::identity(2, 1, 0.9).unwrap();
        let sol = LqtSolution {
            p: DMatrix::zeros(4, 4),
            k: DMatrix::zeros(1, 4),
            iterations: 0,
            final_delta: 0.0,
            gain_history: vec![],
        };
        let mut obs = LuenbergerObserver::with_gain(model.clone(), DMatrix::zeros(2, 2), x0.clone()).unwrap();
        let mut plant = crate::plant::LinearPlant::new(model, x0.clone()).unwrap();
        let tr = run_observer_closed_loop(&mut plant, &gen, &w, &sol, &mut obs, 20).unwrap();
        assert!(tr.records().iter().all(|r| r.y == x0 && r.cost == 0.0));
    }
}
