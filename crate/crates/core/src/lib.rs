//! Linear quadratic tracking for discrete-time linear systems.
//!
//! Two controllers share the same plant, reference and cost types:
//!
//! * a model-based controller that iterates the Lyapunov equation for a
//!   state-feedback gain and closes the loop through a Luenberger observer
//!   ([`lqt`], [`observer`]);
//! * a data-driven controller that learns a quadratic kernel over past
//!   inputs, outputs and the lagged reference by value iteration on
//!   recorded data ([`datadriven`], [`datagen`]).
//!
//! [`bayesopt`] tunes the diagonal cost weights of either pipeline.
//!
//! ```
//! use lqt_core::{augmented::augment, fixtures, lqt, statespace::CostWeights};
//!
//! let model = fixtures::paper_model();
//! let gen = fixtures::paper_reference_generator();
//! let w = CostWeights::identity(5, 7, 0.99)?;
//! let aug = augment(&model, &gen, &w)?;
//! let k0 = lqt::random_initial_gain(7, 11, 10.0, 1);
//! let sol = lqt::solve_lqt(&aug, &w, &k0, 0.01)?;
//! assert!(lqt::discounted_spectral_radius(&aug, 0.99, &sol.k) < 1.0);
//! # Ok::<(), lqt_core::Error>(())
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmented;
pub mod bayesopt;
pub mod config;
pub mod datadriven;
pub mod datagen;
mod error;
pub mod fixtures;
pub mod linalg;
pub mod lqt;
pub mod observer;
pub mod plant;
pub mod statespace;
pub mod trace;

pub use error::{Error, Result};
