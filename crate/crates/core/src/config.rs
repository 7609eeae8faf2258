//! JSON system descriptions: named matrices as row-major nested arrays.
//!
//! ```json
//! {
//!   "a": [[0.9, 0.1], [0.0, 0.8]],
//!   "b": [[1.0], [0.5]],
//!   "c": [[1.0, 0.0]],
//!   "reference": { "r0": [2.0] },
//!   "weights": { "q": [[1.0]], "r": [[0.5]], "gamma": 0.99 }
//! }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixtures;
use crate::linalg::{from_rows, to_rows};
use crate::statespace::{CostWeights, ReferenceGenerator, StateSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    /// Defaults to the identity (constant reference).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
    pub r0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsConfig>,
}

impl SystemConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The extruder model with its set-point.
    pub fn paper() -> Self {
        Self {
            a: to_rows(&fixtures::paper_a()),
            b: to_rows(&fixtures::paper_b()),
            c: to_rows(&fixtures::paper_c()),
            reference: Some(ReferenceConfig {
                f: None,
                r0: fixtures::REFERENCE.to_vec(),
            }),
            weights: None,
        }
    }

    pub fn model(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::new(from_rows(&self.a)?, from_rows(&self.b)?, from_rows(&self.c)?)
    }

    /// The configured reference, or a zero set-point.
    pub fn reference_generator(&self) -> Result<ReferenceGenerator> {
        let p = self.c.len();
        match &self.reference {
            None => ReferenceGenerator::constant(DVector::zeros(p)),
            Some(rc) => {
                let r0 = DVector::from_vec(rc.r0.clone());
                match &rc.f {
                    Some(f) => ReferenceGenerator::new(from_rows(f)?, r0),
                    None => ReferenceGenerator::constant(r0),
                }
            }
        }
    }

    /// The configured weights, or identities with the given discount.
    pub fn weights(&self, default_gamma: f64) -> Result<CostWeights> {
        match &self.weights {
            Some(w) => CostWeights::new(from_rows(&w.q)?, from_rows(&w.r)?, w.gamma),
            None => {
                let p = self.c.len();
                let m = self.b.first().map_or(0, Vec::len);
                CostWeights::new(DMatrix::identity(p, p), DMatrix::identity(m, m), default_gamma)
            }
        }
    }
}
