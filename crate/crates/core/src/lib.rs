//! Core primitives for the multimodal sensor inference gateway.
//!
//! Three input families (tabular sensor records, 16 kHz PCM audio, grayscale
//! frame sequences) are turned into model-ready inputs here, classified by a
//! small transformer encoder or captioned by a caption/refine chain, and fused
//! across modalities. The asynchronous job service lives in `itsgw-service`.

pub mod api;
pub mod audio;
pub mod checkpoint;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod protocol;
pub mod tensor;
pub mod text;
pub mod train;
pub mod visual;

pub use error::{Error, Result};
