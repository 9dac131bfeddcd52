//! Tri-modal time-series forecasting: temporal, textual, and symbolic views
//! of a window are learned jointly, mixed by a volatility-gated router, and
//! trained under an uncertainty-weighted composite loss.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod embed;
pub mod error;
pub mod gradcheck;
pub mod prompt;
pub mod report;
pub mod hashutil;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod special;
pub mod symbolic;
pub mod tensor;
pub mod train;

pub use error::{Result, StatError};
pub use tensor::Tensor;
