//! Unsupervised single-view depth estimation from rectified stereo pairs.
//!
//! A convolutional encoder predicts a per-pixel disparity map from the left
//! image alone. A fixed, parameter-free geometric decoder then inverse-warps
//! the right image along scanlines using that disparity and compares the
//! reconstruction with the left image. Minimizing the photometric
//! reconstruction error plus a smoothness prior trains the encoder end to
//! end without any ground-truth depth.
//!
//! The crate is organized around that pipeline:
//!
//! * [`tensor`] / [`tape`] — a small dense-tensor engine with reverse-mode
//!   automatic differentiation, generic over `f32`/`f64`.
//! * [`net`] — the disparity-predicting encoder: AlexNet-like trunk, fully
//!   convolutional head, and a coarse-to-fine ladder of learnable bilinear
//!   upsampling stages with optional zero-initialized skip fusion.
//! * [`geometry`] — the decoder: scanline inverse warping, photometric and
//!   smoothness losses, warp linearization, disparity/depth conversion.
//! * [`train`] — SGD with momentum, the per-epoch learning-rate decay law,
//!   stage-wise coarse-to-fine training and augmented fine-tuning.
//! * [`data`] — image I/O, synthetic rectified-stereo scenes with exact
//!   ground-truth disparity, and the color/scale/flip augmentations.
//! * [`baseline`] — variational Horn–Schunck stereo and proxy-supervised
//!   training with hole-masked labels.
//! * [`metrics`] — the seven depth error/accuracy measures and heat maps.
//! * [`gradcheck`] — central finite-difference validation of every
//!   differentiable primitive and of the end-to-end composite.
//! * [`cli`] / [`config`] / [`checkpoint`] — the operator surface: config
//!   files, subcommand entry points, and bit-exact checkpoints.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tape::{Tape, VarId};
pub use tensor::Tensor;
