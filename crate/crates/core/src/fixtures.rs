//! The six-zone extruder temperature model and its published reference values.
//!
//! Everything here is transcribed verbatim. [`fixture_hash`] pins the whole
//! set so that accidental edits show up as a test failure.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::statespace::{CostWeights, ReferenceGenerator, StateSpaceModel};

#[rustfmt::skip]
const A: [[f64; 6]; 6] = [
    [0.992,  0.0018,  0.0,    0.0,    0.0,    0.0],
    [0.0023, 0.9919,  0.0043, 0.0,    0.0,    0.0],
    [0.0,   -0.0042,  1.0009, 0.0024, 0.0,    0.0],
    [0.0,    0.0,     0.0013, 0.9979, 0.0,    0.0],
    [0.0,    0.0,     0.0,    0.0,    0.9972, 0.0],
    [0.0,    0.0,     0.0,    0.0,    0.0,    0.9953],
];

#[rustfmt::skip]
const B: [[f64; 7]; 6] = [
    [1.0033, 0.0,    0.0,    0.0,    0.0,    0.0,    -0.2175],
    [0.0,    1.0460, 0.0,    0.0,    0.0,    0.0,    -0.0788],
    [0.0,    0.0,    1.0326, 0.0,    0.0,    0.0,    -0.0020],
    [0.0,    0.0,    0.0,    0.4798, 0.0,    0.0,    -0.0669],
    [0.0,    0.0,    0.0,    0.0,    0.8882, 0.0,     0.1273],
    [0.0,    0.0,    0.0,    0.0,    0.0,    1.1699, -0.1792],
];

#[rustfmt::skip]
const C: [[f64; 6]; 5] = [
    [0.992,  0.00018, 0.0,    0.0,    -0.0001,  0.0],
    [0.0023, 1.3,     0.0043, 0.0,     0.0,     0.0],
    [0.0,   -0.0042,  1.0109, 0.0024,  0.0,     0.201],
    [0.0,    0.0,     0.0013, 0.989,   0.00031, 0.64],
    [0.0,    0.0,     0.0,    0.0,     0.923,   0.3],
];

#[rustfmt::skip]
const K_DATA: [[f64; 6]; 7] = [
    [ 0.7395, -0.0076, -0.0003, -0.0264,  0.0194, -0.0170],
    [-0.0076,  0.7430,  0.0031, -0.0093,  0.0068, -0.0060],
    [-0.0003, -0.0033,  0.7599,  0.0021,  0.0002, -0.0002],
    [-0.0126, -0.0042,  0.0016,  1.0971,  0.0092, -0.0079],
    [ 0.0171,  0.0058,  0.0002,  0.0170,  0.8179,  0.0108],
    [-0.0198, -0.0067, -0.0002, -0.0193,  0.0143,  0.6823],
    [-0.1525, -0.0519, -0.0018, -0.1412,  0.1091, -0.0977],
];

pub const REFERENCE: [f64; 5] = [150.0, 160.0, 170.0, 175.0, 180.0];

#[allow(clippy::approx_constant)]
pub const OBSERVER_BO_Q: [f64; 5] = [0.943, 0.762, 0.542, 0.420, 0.514];
#[allow(clippy::approx_constant)]
pub const OBSERVER_BO_R: [f64; 7] = [0.300, 0.270, 0.281, 0.092, 0.054, 0.269, 0.318];

/// Tuned weights of the data-driven controller.
pub const DATA_DRIVEN_BO_Q: [f64; 5] = [0.174, 0.056, 0.010, 0.010, 0.160];
pub const DATA_DRIVEN_BO_R: [f64; 7] = [0.145, 0.389, 0.020, 0.116, 0.099, 0.316, 0.010];

/// Published closed-loop numbers, kept for comparison output.
pub mod expected {
    pub const OBSERVER_Y: [f64; 5] = [149.9798, 159.9932, 169.9795, 174.9815, 179.9859];
    pub const OBSERVER_ERROR: f64 = 0.0376;
    pub const OBSERVER_INDEX_100: f64 = 183_362.5;
    pub const OBSERVER_INDEX_1000: f64 = 183_436.2;
    pub const OBSERVER_ESTIMATION_ERROR_100: f64 = 0.008;

    pub const OBSERVER_BO_Y: [f64; 5] = [149.9940, 159.9946, 169.9843, 174.9873, 179.9834];
    pub const OBSERVER_BO_ERROR: f64 = 0.0274;
    pub const OBSERVER_BO_INDEX_100: f64 = 76_060.36;
    pub const OBSERVER_BO_INDEX_1000: f64 = 76_072.6;
    pub const OBSERVER_REDUCTION_PCT: f64 = 58.5;

    pub const DATA_DRIVEN_Y: [f64; 5] = [150.0857, 160.1181, 171.0027, 175.7926, 180.1416];
    pub const DATA_DRIVEN_ERROR: f64 = 1.2942;
    pub const DATA_DRIVEN_INDEX_100: f64 = 1_065_077.0;
    pub const DATA_DRIVEN_INDEX_1000: f64 = 1_074_985.0;

    pub const DATA_DRIVEN_BO_Y: [f64; 5] = [150.069, 160.154, 170.011, 175.199, 180.176];
    pub const DATA_DRIVEN_BO_ERROR: f64 = 0.3154;
    pub const DATA_DRIVEN_BO_INDEX_100: f64 = 204_635.7;
    pub const DATA_DRIVEN_BO_INDEX_1000: f64 = 206_358.8;
    pub const DATA_DRIVEN_REDUCTION_PCT: f64 = 80.8;
}

/// Settings of the observer-based runs.
pub mod observer_params {
    pub const X0: f64 = 20.0;
    pub const XHAT0: f64 = 50.0;
    pub const TAU: f64 = 0.002;
    pub const EPS: f64 = 0.01;
    pub const K0_VARIANCE: f64 = 10.0;
    pub const GAMMA: f64 = 0.99;
}

/// Settings of the data-driven runs.
pub mod data_driven_params {
    pub const X0: f64 = 50.0;
    pub const GAMMA: f64 = 0.99;
    pub const EPS_RL: f64 = 1e-3;
    pub const MU: f64 = 1e-4;
    pub const HORIZON: usize = 6;
    pub const SAMPLES: usize = 15_000;
    pub const MAX_ITERS: usize = 1000;
    pub const NOISE_VARIANCE: f64 = 1.5;
    pub const BANDWIDTH: f64 = 1.65;
    pub const FIXED_FREQUENCY: f64 = 16.5;
}

fn to_matrix<const R: usize, const K: usize>(rows: &[[f64; K]; R]) -> DMatrix<f64> {
    DMatrix::from_fn(R, K, |i, j| rows[i][j])
}

pub fn paper_a() -> DMatrix<f64> {
    to_matrix(&A)
}
pub fn paper_b() -> DMatrix<f64> {
    to_matrix(&B)
}
pub fn paper_c() -> DMatrix<f64> {
    to_matrix(&C)
}
/// LQR gain used when recording training data (7x6).
pub fn paper_k_data() -> DMatrix<f64> {
    to_matrix(&K_DATA)
}

pub fn paper_model() -> StateSpaceModel {
    StateSpaceModel::new(paper_a(), paper_b(), paper_c()).expect("fixture model is valid")
}

pub fn paper_reference() -> DVector<f64> {
    DVector::from_column_slice(&REFERENCE)
}

pub fn paper_reference_generator() -> ReferenceGenerator {
    ReferenceGenerator::constant(paper_reference()).expect("fixture reference is valid")
}

pub fn observer_bo_weights(gamma: f64) -> CostWeights {
    CostWeights::from_diagonals(&OBSERVER_BO_Q, &OBSERVER_BO_R, gamma).expect("fixture weights are PD")
}

pub fn data_driven_bo_weights(gamma: f64) -> CostWeights {
    CostWeights::from_diagonals(&DATA_DRIVEN_BO_Q, &DATA_DRIVEN_BO_R, gamma).expect("fixture weights are PD")
}

/// sha256 over the shapes and little-endian bit patterns of `mats`.
pub fn hash_matrices(mats: &[&DMatrix<f64>]) -> String {
    let mut h = Sha256::new();
    for m in mats {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

/// Digest of every numeric fixture in this module.
pub fn fixture_hash() -> String {
    use expected::*;
    let scalars = [
        OBSERVER_ERROR,
        OBSERVER_INDEX_100,
        OBSERVER_INDEX_1000,
        OBSERVER_ESTIMATION_ERROR_100,
        OBSERVER_BO_ERROR,
        OBSERVER_BO_INDEX_100,
        OBSERVER_BO_INDEX_1000,
        OBSERVER_REDUCTION_PCT,
        DATA_DRIVEN_ERROR,
        DATA_DRIVEN_INDEX_100,
        DATA_DRIVEN_INDEX_1000,
        DATA_DRIVEN_BO_ERROR,
        DATA_DRIVEN_BO_INDEX_100,
        DATA_DRIVEN_BO_INDEX_1000,
        DATA_DRIVEN_REDUCTION_PCT,
    ];
    hash_matrices(&[
        &paper_a(),
        &paper_b(),
        &paper_c(),
        &paper_k_data(),
        &column(&REFERENCE),
        &column(&OBSERVER_BO_Q),
        &column(&OBSERVER_BO_R),
        &column(&DATA_DRIVEN_BO_Q),
        &column(&DATA_DRIVEN_BO_R),
        &column(&OBSERVER_Y),
        &column(&OBSERVER_BO_Y),
        &column(&DATA_DRIVEN_Y),
        &column(&DATA_DRIVEN_BO_Y),
        &column(&scalars),
    ])
}

/// Pinned value of [`fixture_hash`].
pub const FIXTURE_SHA256: &str = "e269e2df9d24e88f399d5f65487d9c76d0107c4ea5a9b9cd4efe29e2d43d6860";

/// Pinned value of [`StateSpaceModel::fingerprint`] for [`paper_model`].
pub const MODEL_SHA256: &str = "3b1c3fd92d534ef08842875ff7947e47df22e8a9a8db73a0c06fb57f5f260c61";
