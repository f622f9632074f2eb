//! Orthogonal greedy learning over finite dictionaries.
//!
//! The crate provides the building blocks for sparse nonparametric regression
//! with orthogonal greedy learners (OGL), their thresholded variants (TOGL)
//! and the δ-thresholding learner with the adaptive relative-residual stop
//! (δ-TOGL). Ridge and FISTA-Lasso baselines, k-fold cross-validation and an
//! experiment runner reproducing the sinc simulation study sit on top.
//!
//! Module map:
//!
//! - [`data`]: sample generation, CSV ingestion, RMSE and truncation.
//! - [`dictionary`]: Gaussian RBF dictionaries evaluated at sample points.
//! - [`projection`]: empirical inner products and the incremental projector.
//! - [`greedy`]: selection rules, stopping rules and the fit drivers.
//! - [`baselines`]: ridge regression and Lasso via FISTA.
//! - [`modelsel`]: parameter grids and k-fold cross-validation.
//! - [`experiment`]: the experiment runner behind the CLI.

pub mod baselines;
pub mod data;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod modelsel;
pub mod projection;

pub use error::{Error, Result};
