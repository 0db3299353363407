//! Deep convolutional neural fields: a windowed convolutional network whose
//! top layer feeds a linear-chain CRF, trainable by log-likelihood, smoothed
//! labelwise accuracy, or a polynomial surrogate of per-label AUC.

pub mod bench;
pub mod chebyshev;
pub mod crf;
pub mod dcnn;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod params;
pub mod seqdata;
pub mod training;

pub use error::{Error, Result};
