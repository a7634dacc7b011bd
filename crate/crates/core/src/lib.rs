//! Quadratic a-variations of Gaussian processes: estimation of the local
//! scale parameter, asymptotic variances, simulation and Monte Carlo studies.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fisher;
pub mod grid2d;
pub mod io;
pub mod models;
pub mod quadrature;
pub mod seqalg;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
pub use estimator::{DenominatorMode, EstimateReport, PathSample};
pub use models::{DriftSpec, LocalBehavior, ModelSpec};
pub use seqalg::{Filter, VariationSequence};
pub use simulate::{Sampler, SimConfig};
