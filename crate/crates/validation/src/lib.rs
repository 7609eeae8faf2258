//! Helpers for the `acceptance` target, which checks the published
//! closed-loop results end to end. Run it alone with
//! `cargo test -p lqt-validation --test acceptance`; pass criterion
//! numbers after `--` to run a subset.

use std::fmt;

use lqt_core::statespace::StateSpaceModel;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Random controllable and observable system with `rho(A) <= 0.95`.
pub fn random_system(n: usize, m: usize, p: usize, seed: u64) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let mut a = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
        let rho = lqt_core::linalg::spectral_radius(&a);
        if rho > 0.95 {
            a *= 0.95 / rho;
        }
        let b = DMatrix::from_fn(n, m, |_, _| normal.sample(&mut rng));
        let c = DMatrix::from_fn(p, n, |_, _| normal.sample(&mut rng));
        let model = StateSpaceModel::new(a, b, c).expect("consistent shapes");
        if model.is_controllable() && model.is_observable() {
            return model;
        }
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// `|a - b| <= rel * |b|`.
pub fn within_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {} {tag}: {} | {}", self.id, self.name, self.detail)
    }
}
