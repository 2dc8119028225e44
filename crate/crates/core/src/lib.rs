pub mod backend;
pub mod bandwidth;
pub mod cluster;
pub mod config;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod segment;
pub mod segmenter;
pub mod synth;
pub mod tensor;
pub mod tsvad;
pub mod vad;

pub use embedding::Embedding;
pub use error::{Error, Result};
