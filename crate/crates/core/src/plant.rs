//! Simulated plants that expose only their measured outputs to controllers.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::statespace::StateSpaceModel;

mod sealed {
    pub trait Sealed {}
}

/// Default bound on `|y|`; beyond it the simulation is treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// A black-box plant: controllers see `y(t)` and push `u(t)`.
pub trait Plant: sealed::Sealed {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Current measurement `y(t)`.
    fn output(&self) -> DVector<f64>;
    /// Applies `u(t)` and advances to `t + 1`.
    fn apply(&mut self, u: &DVector<f64>) -> Result<()>;
    /// The hidden state, for trace diagnostics only.
    fn diagnostic_state(&self) -> Option<DVector<f64>> {
        None
    }
}

/// Deterministic linear plant.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    model: StateSpaceModel,
    x: DVector<f64>,
    t: usize,
    limit: f64,
}

impl LinearPlant {
    pub fn new(model: StateSpaceModel, x0: DVector<f64>) -> Result<Self> {
        crate::linalg::ensure_len(&x0, model.n(), "initial state")?;
        Ok(Self {
            model,
            x: x0,
            t: 0,
            limit: DIVERGENCE_LIMIT,
        })
    }

    pub fn with_limit(mut self, limit: f64) -> Self {
        self.limit = limit;
        self
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }
}

impl sealed::Sealed for LinearPlant {}

impl Plant for LinearPlant {
    fn input_dim(&self) -> usize {
        self.model.m()
    }
    fn output_dim(&self) -> usize {
        self.model.p()
    }
    fn output(&self) -> DVector<f64> {
        self.model.c() * &self.x
    }
    fn apply(&mut self, u: &DVector<f64>) -> Result<()> {
        let next = self.model.step(&self.x, u)?;
        self.t += 1;
        let y = self.model.c() * &next;
        check_envelope(&y, self.t, self.limit)?;
        self.x = next;
        Ok(())
    }
    fn diagnostic_state(&self) -> Option<DVector<f64>> {
        Some(self.x.clone())
    }
}

pub(crate) fn check_envelope(v: &DVector<f64>, step: usize, limit: f64) -> Result<()> {
    let mag = v.iter().fold(0.0_f64, |a, b| if b.is_finite() { a.max(b.abs()) } else { f64::INFINITY });
    if mag > limit {
        return Err(Error::Diverged {
            step,
            magnitude: mag,
            limit,
        });
    }
    Ok(())
}
