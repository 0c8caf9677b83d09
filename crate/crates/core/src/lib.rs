//! Muon and Adam/AdamW optimizers, the hybrid Muon/Adam parameter grouping,
//! and a small sequential-recommendation testbed for comparing them.
//!
//! The numerical kernels in [`linalg`] and the steppers in [`optim`] are
//! generic over the floating-point type through [`Scalar`]. The models,
//! data pipeline and experiment harness run in `f64`; the aliases below
//! name the concrete types they use.

pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the models and the harness.
pub type Real = f64;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Tensor64 = model::Tensor<f64>;
pub type ParamTensor64 = model::ParamTensor<f64>;
pub type AdamSpec64 = optim::AdamSpec<f64>;
pub type MuonSpec64 = optim::MuonSpec<f64>;
pub type ParamState64 = optim::ParamState<f64>;
