//! File formats, checkpoints, configuration and experiment pipelines on top
//! of `graphaug-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod text;
pub mod tu;

pub use error::{Error, Result};
