//! Few-shot image classification with an attention-based Siamese composite network.
//!
//! A shared-weight twin backbone maps image pairs to 512-d embeddings trained with a
//! contrastive objective. A logistic back-end turns embedding distances into
//! same-class probabilities, and an iterative evidence accumulator classifies unknown
//! images against a labelled reference gallery. Everything down to the autodiff tape
//! is implemented here.

pub mod attention;
pub mod backbone;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod predictor;
pub mod seed;
pub mod siamese;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tape, Tensor, Var};
