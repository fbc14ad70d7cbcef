//! Wind power forecasting with stacked sparse autoencoders, transfer
//! learning across farms and months, and a deep belief network
//! meta-learner.
//!
//! Numeric code is generic over [`numerics::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common case.

pub mod autoencoder;
pub mod dataio;
pub mod dbn;
pub mod error;
pub mod features;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod oracle;
pub mod serialize;
pub mod transfer;

pub use error::{Error, ErrorKind, Result};

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type AeLayer64 = autoencoder::SparseAeLayer<f64>;
pub type AeLayer32 = autoencoder::SparseAeLayer<f32>;
pub type Regressor64 = autoencoder::StackedSparseRegressor<f64>;
pub type Regressor32 = autoencoder::StackedSparseRegressor<f32>;
pub type Rbm64 = dbn::Rbm<f64>;
pub type Rbm32 = dbn::Rbm<f32>;
pub type Dbn64 = dbn::Dbn<f64>;
pub type Dbn32 = dbn::Dbn<f32>;
