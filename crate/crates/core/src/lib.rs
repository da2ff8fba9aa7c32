//! Automated label-invariant data augmentation for graph classification.
//!
//! The crate is `no_std` compatible (it needs `alloc`). Everything that
//! touches the filesystem lives in the `graphaug` companion crate; this crate
//! holds the graph types, the synthetic datasets and their label oracles, a
//! small reverse-mode autodiff engine with the GNN building blocks, the
//! augmentation transforms, the learned augmentation policy, the graph
//! matching reward model, and the training loops.
//!
//! Disable default features to build without `std`:
//!
//! ```toml
//! graphaug-core = { version = "0.1", default-features = false }
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod nn;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
pub use graph::{Graph, GraphBatch, LabeledGraph};
pub use scalar::{Scalar, PROB_FLOOR};
pub use tensor::Matrix;
