//! Unsupervised grounding of first-order predicates from object feature
//! vectors, and classical planning over the learned propositions.
//!
//! The numeric core is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below fix the precision for common uses.

pub mod ama1;
pub mod dataset;
mod error;
pub mod fosae;
pub mod interpret;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod puzzle;
mod scalar;
pub mod solve;

pub use error::{Error, Result};
pub use fosae::{FosaeConfig, FosaeModel, PropositionalState};
pub use scalar::Scalar;

/// An `N×F` matrix of object feature vectors (or a `[B, N, F]` batch).
pub type ObjectSet<T> = nn::Tensor<T>;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Fosae32 = fosae::FosaeModel<f32>;
pub type Fosae64 = fosae::FosaeModel<f64>;
