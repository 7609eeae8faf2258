#![allow(dead_code)]

use lqt_core::statespace::StateSpaceModel;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Random controllable and observable system with `rho(A) <= 0.95`.
pub fn random_system(n: usize, m: usize, p: usize, seed: u64) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let mut a = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
        let rho = lqt_core::linalg::spectral_radius(&a);
        if rho > 0.95 {
            a *= 0.95 / rho;
        }
        let b = DMatrix::from_fn(n, m, |_, _| normal.sample(&mut rng));
        let c = DMatrix::from_fn(p, n, |_, _| normal.sample(&mut rng));
        let model = StateSpaceModel::new(a, b, c).unwrap();
        if model.is_controllable() && model.is_observable() {
            return model;
        }
    }
}
