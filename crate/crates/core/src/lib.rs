//! Quantized bidirectional-LSTM inference with a dataflow accelerator
//! performance model.
//!
//! - [`quant`]: fixed-point grids, binarization and precision configs
//! - [`lstm`]: cell step, BiLSTM layer, folded output layer, greedy decoding
//! - [`model`]: network parameters and the on-disk model format
//! - [`eval`]: PGM loading, edit distance, CER and dataset evaluation
//! - [`perfmodel`]: op counts, folding, cycles, throughput, memory blocks
//! - [`toy`]: a small hand-wired model with synthetic text lines

pub mod error;
pub mod eval;
pub mod lstm;
pub mod matrix;
pub mod model;
pub mod perfmodel;
pub mod quant;
pub mod toy;

pub use error::{Error, Result};
pub use model::{Alphabet, Dims, NetworkModel, RawModel};
pub use quant::{PrecisionConfig, QuantSpec};
