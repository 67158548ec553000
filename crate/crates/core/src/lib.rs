//! Dual-branch image classification with a spatial CNN tower and a spectral
//! tower built on learnable Fourier-domain filters.
//!
//! All numerics run in `f64` on a single thread, so a fixed seed reproduces
//! a run bit for bit.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fft;
pub mod fusion;
pub mod layers;
pub mod models;
pub mod params;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use models::{Model, NetworkSpec};
pub use tensor::Tensor;
