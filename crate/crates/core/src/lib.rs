//! Estimation of the elemental composition of steel scrap from per-heat
//! production records.
//!
//! The composition of each scrap type is a slowly drifting hidden state.
//! Each heat gives one scalar mass-balance observation: element mass in the
//! steel (plus slag, for elements that partition) against the charged scrap
//! and hot metal. Elements that stay in the steel (Cu, Ni) give a linear
//! Gaussian model fitted with a Kalman filter. Elements that partition into
//! the slag (Cr, S) add two partition-coefficient parameters to the state
//! and are fitted with an unscented Kalman filter.
//!
//! Modules:
//! - [`model`]: domain types and the closed-form moment relations.
//! - [`synth`]: seeded synthetic datasets with known ground truth.
//! - [`filters`]: Kalman and unscented Kalman steps and the run driver.
//! - [`baseline`]: windowed non-negative least squares and OLS initialization.
//! - [`eval`]: error metrics, misspecification sweeps, report export.
//! - [`io`] and [`pipeline`]: file formats, run configuration, CLI commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod config;
pub mod error;
pub mod eval;
pub mod filters;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use model::{ElementSpec, GaussianBelief, HeatRecord, NoiseSpec, PartitionModel, ScrapCatalog};
