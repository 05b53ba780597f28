//! Dense tensors, a reverse-mode tape, and the layers, loss and optimizer
//! the autoencoder is built from.

mod adam;
mod gradcheck;
mod graph;
mod gumbel;
mod init;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, BlockReport, GradCheckOptions, GradCheckReport};
pub use graph::{mse, Gradients, Graph, Var};
pub use gumbel::{gumbel_from_uniform, gumbel_max, rng_from_seed, GumbelNoise, Rng, UNIFORM_MAX, UNIFORM_MIN};
pub use init::glorot_uniform;
pub use tensor::{argmax, Tensor};
