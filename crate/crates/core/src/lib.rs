//! Continuous affect annotation toolkit: annotation records and resampling,
//! EWE gold standards, agreement and non-parametric statistics, a LASSO
//! baseline, LSTM regressors with late-fusion transfer, and a
//! cross-validation harness with a synthetic data generator.

pub mod aggregate;
pub mod error;
pub mod gems;
pub mod harness;
pub mod io;
pub mod lasso;
pub mod metrics;
pub mod neural;
pub mod preprocess;
pub mod record;
pub mod stats;

pub use error::{Error, Result};
