//! Luenberger state observer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, ensure_len};
use crate::statespace::StateSpaceModel;

/// `L = A C^T (C C^T + tau I)^{-1}`, rejected unless `A - LC` is Schur stable.
pub fn design_gain(model: &StateSpaceModel, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive, got {tau}"),
        });
    }
    if !model.is_observable() {
        return Err(Error::RankDeficient {
            what: "observability matrix",
            rank: linalg::rank(&model.observability_matrix()),
            required: model.n(),
        });
    }
    let c = model.c();
    let p = model.p();
    let psi = c * c.transpose() + DMatrix::identity(p, p) * tau;
    // L^T = Psi^{-1} C A^T, Psi symmetric.
    let lt = linalg::solve_spd(&psi, &(c * model.a().transpose()), "observer Psi")?;
    let l = lt.transpose();
    let rho = linalg::spectral_radius(&(model.a() - &l * c));
    if rho >= 1.0 {
        return Err(Error::UnstableObserver { spectral_radius: rho });
    }
    Ok(l)
}

/// Euclidean distance between estimate and true state.
pub fn estimation_error(xhat: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (xhat - x).norm()
}

#[derive(Debug, Clone)]
pub struct LuenbergerObserver {
    model: StateSpaceModel,
    l: DMatrix<f64>,
    xhat: DVector<f64>,
    tau: f64,
}

impl LuenbergerObserver {
    pub fn design(model: StateSpaceModel, tau: f64, xhat0: DVector<f64>) -> Result<Self> {
        let l = design_gain(&model, tau)?;
        ensure_len(&xhat0, model.n(), "initial estimate")?;
        Ok(Self { model, l, xhat: xhat0, tau })
    }

    /// Uses a caller-supplied gain without the stability check.
    pub fn with_gain(model: StateSpaceModel, l: DMatrix<f64>, xhat0: DVector<f64>) -> Result<Self> {
        linalg::ensure_shape(&l, model.n(), model.p(), "observer gain")?;
        ensure_len(&xhat0, model.n(), "initial estimate")?;
        Ok(Self { model, l, xhat: xhat0, tau: 0.0 })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.l
    }
    pub fn estimate(&self) -> &DVector<f64> {
        &self.xhat
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }
    /// `C xhat`.
    pub fn predicted_output(&self) -> DVector<f64> {
        self.model.c() * &self.xhat
    }
    /// Spectral radius of `A - LC`.
    pub fn error_spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&(self.model.a() - &self.l * self.model.c()))
    }

    /// `xhat <- A xhat + B u + L (y - C xhat)`; returns the new estimate.
    pub fn observe_step(&mut self, u: &DVector<f64>, y: &DVector<f64>) -> Result<&DVector<f64>> {
        ensure_len(y, self.model.p(), "measurement")?;
        let innovation = y - self.model.c() * &self.xhat;
        self.xhat = self.model.step(&self.xhat, u)? + &self.l * innovation;
        Ok(&self.xhat)
    }
}
