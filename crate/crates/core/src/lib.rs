//! Traffic-junction image synthesis: scene graphs, a graph-attention condition model
//! driving a SPADE generator, dataset tooling, a SUMO bridge and evaluation metrics.

pub mod condition;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod scene;
pub mod spade;
pub mod sumo;

pub use error::{Error, Result};
