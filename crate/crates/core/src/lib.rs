//! Simulation and estimation toolkit for one-dimensional diffusion-limited
//! aggregation with a moving front, plus two simplified variants.

pub mod caricature;
pub mod dla;
pub mod error;
pub mod field;
pub mod lyapunov;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// Estimator outputs at double precision.
pub type Summary = stats::EnsembleSummary<f64>;
pub type Slope = stats::SlopeEstimate<f64>;
pub type Tail = stats::TailPoint<f64>;
pub type Bound = stats::BoundReport<f64>;
pub type Ks = stats::KsResult<f64>;
