//! Recursive estimators of the scrap composition.
//!
//! Elements that stay in the steel use the exact Kalman filter on the scrap
//! fractions. Elements that partition into the slag use an unscented Kalman
//! filter on the state augmented with the partition parameters `[c1, c2]`.

mod kalman;
mod run;
mod sigma;
mod ukf;

pub use kalman::{kalman_step, predict_only, scalar_update, MIN_INNOVATION_VARIANCE};
pub use run::{predict_steel_fraction, run_filter, Filter, FilterOptions, FilterTrace, TraceEntry};
pub use sigma::{cholesky_psd, sigma_points, CholeskyFactor, SigmaPointSet, Spread, JITTER_STEPS};
pub use ukf::{observe_steel_mass, ukf_step};

use crate::model::GaussianBelief;

/// Innovation `v = y - E[y]` and its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub value: f64,
    pub variance: f64,
}

/// Result of processing one heat.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Belief after seeing the heat (equal to the prior when `f_steel` is missing).
    pub posterior: GaussianBelief,
    /// Prior for the next heat.
    pub next_prior: GaussianBelief,
    pub innovation: Option<Innovation>,
    /// Sigma points whose partition coefficient had to be reflected.
    pub reflected_points: usize,
}
