//! Learning PDE right-hand sides from noisy samples.

pub mod config;
pub mod datagen;
pub mod error;
pub mod evalharness;
pub mod manifest;
pub mod mol;
pub mod nnjet;
pub mod residuals;
pub mod trainers;
pub mod tropt;

pub use error::{Error, Result};
