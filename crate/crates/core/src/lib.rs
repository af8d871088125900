//! Cluster mining in 2D feature histograms of graph nodes.

pub mod error;
pub mod graph;
pub mod histogram;
pub mod mdl;
pub mod mine;
pub mod morphology;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod tree;
pub mod vocab;

pub use error::{Error, Result};
