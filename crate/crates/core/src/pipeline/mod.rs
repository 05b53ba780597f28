//! Training, evaluation and batch encoding of datasets.

mod encode;
mod grid;
mod train;

pub use encode::{encode_dataset, encode_observations, CollisionStats, LoggedTransition, TransitionLog};
pub use grid::{eval_arity_grid, grid_csv, min_propositions, GridOrder, GridRow, GridSpec};
pub use train::{evaluate, train, EpochMetrics, Reconstruction, TrainError, TrainOptions, TrainOutcome};
