//! Compression compiler for small CNNs.
//!
//! The pipeline trains (optionally), level-prunes with a binary search over
//! sparsity, quantizes weights to int8 and activations to calibrated affine
//! int8, stores weights as delta-indexed sparse streams, runs inference
//! directly on those streams and emits self-contained C99 sources.
//!
//! # Modules
//!
//! - [`model`] -- layer vocabulary, [`ModelGraph`], shape inference
//! - [`io`] -- `.sdm` container and IDX dataset readers
//! - [`dense`] -- reference float forward pass and evaluation
//! - [`trainer`] -- backprop with Adam/SGD and masked updates
//! - [`pruner`] -- level pruning and sparsity binary search
//! - [`quantizer`] -- int8 weight and activation quantization
//! - [`csc`] -- delta-indexed sparse streams
//! - [`sparse`] -- inference on sparse streams (float and int8)
//! - [`codegen`] -- C source emission and memory footprint
//! - [`report`] -- layer, size and timing reports
//! - [`pipeline`] -- the end-to-end compression flow
//!
//! # Feature flags
//!
//! - **`parallel`** *(default)* -- batch evaluation, calibration and
//!   per-batch gradients run on rayon. Results are identical to the
//!   sequential build.

pub mod codegen;
pub mod compressed;
pub mod csc;
pub mod data;
pub mod dense;
pub mod error;
pub mod io;
pub mod kernels;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod pruner;
pub mod quantizer;
pub mod report;
pub mod sparse;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use compressed::{CompressedModel, CompressedWeights};
pub use csc::CscTensor;
pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use model::{ActShape, LayerSpec, ModelGraph};
pub use parallel::Execution;
pub use quantizer::{AffineParams, QuantParams};
pub use tensor::{Tensor, TensorF32, TensorI8};
pub use trainer::{PruneMask, TrainConfig};
