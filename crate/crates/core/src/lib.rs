//! Tree-structured sentence encoders whose composition weights are either
//! shared (RecNN, TreeLSTM) or generated per node by a small meta network
//! (DC-RecNN, DC-TreeLSTM).
//!
//! Everything runs on f64 tensors with a tape-based reverse-mode
//! differentiator, so trained models are reproducible bit for bit from a seed.

pub mod analysis;
pub mod composers;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod parallel;
pub mod params;
pub mod synth;
pub mod tape;
pub mod tasks;
pub mod tensor;
pub mod training;
pub mod treebank;

pub use error::{Error, Result};
