//! Text-steerable visual representations at desk scale.
//!
//! A small frozen vision transformer is made steerable by interleaving
//! zero-initialized, tanh-gated cross-attention layers that let visual patch
//! tokens attend to an adapted text prompt. Training uses a patch-level
//! referential segmentation objective on deterministic synthetic scenes;
//! evaluation covers conditional retrieval, attention steering on mosaics,
//! gate-scale trade-off sweeps, layer-wise divergence, linear probes, and
//! referential IoU.
//!
//! Everything is `f64`, seeded, and bit-reproducible: the same run
//! configuration yields byte-identical checkpoints and reports.

pub mod ckpt;
pub mod error;
pub mod eval;
pub mod img;
pub mod imgio;
pub mod objective;
pub mod par;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod vit;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, TensorId};
