//! The first-order state autoencoder: `U` predicate units, each with `A`
//! attentions choosing argument objects and the `P` shared predicate
//! networks evaluated on them, followed by a decoder that reconstructs the
//! objects from the `U·P` truth values.

mod checkpoint;
mod config;
mod model;
mod state;

pub use checkpoint::{
    decode_weights, encode_weights, load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry,
    CHECKPOINT_FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
pub use config::{anneal_tau, schedule_decay, FosaeConfig};
pub use model::{
    closed_form_parameter_count, parameter_names, parameter_shapes, FosaeModel, ForwardOutput, ForwardVars,
    Sampling,
};
pub use state::{AttentionAssignment, PropositionalState};
