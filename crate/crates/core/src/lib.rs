//! Zero-shot time-series forecasting at desk scale.
//!
//! The crate covers the full pipeline: synthetic-prior data generation
//! (composite-kernel Gaussian processes plus a trend/seasonal/noise prior),
//! a selective state-space sequence model with dilated-convolution
//! embeddings, reverse-mode training, single-pass multipoint inference, and
//! a MASE benchmark harness.

pub mod autodiff;
pub mod error;
pub mod evalharness;
pub mod inference;
pub mod linalg;
pub mod network;
pub mod priors;
pub mod real;
pub mod rng;
pub mod series;
pub mod ssm;
pub mod timefeatures;
pub mod training;

pub use error::Error;
pub use real::Real;
pub use rng::SampleStream;
pub use series::TimeSeries;
pub use timefeatures::{CalendarFeatures, Frequency};
