//! Core algorithms for the puppet animation pipeline.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! a dense-tensor engine with reverse-mode autodiff, DDPM-style diffusion
//! machinery with multi-domain classifier-free guidance, the two denoising
//! networks (geometry stage and controlled video stage), a procedural
//! renderer for articulated capsule figures with analytic depth/normal
//! ground truth, and pixel-space quality metrics.
//!
//! The crate is `no_std`-compatible (`--no-default-features`); it then
//! relies on `alloc` and `libm`. The default `std` + `parallel` features
//! enable native float intrinsics and rayon-parallel kernels. Parallel
//! kernels keep a fixed per-element reduction order, so results are
//! bitwise identical to the sequential path.
//!
//! File formats, dataset export, checkpoints, and the CLI live in the
//! companion crate `puppet-pipeline`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod checks;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod optim;
pub mod par;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod tensor;
pub mod unet;

pub use error::CoreError;
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T, E = CoreError> = core::result::Result<T, E>;
