//! Trainable building blocks: dense layers, GIN/GCN message passing,
//! readouts, a GRU cell, the Adam optimiser and gradient checking.

pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod optim;
pub mod params;

pub use gru::Gru;
pub use layers::{readout, GnnKind, GnnLayer, GnnStack, Linear, Mlp, Readout};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, Param, ParamId, ParamStore};
