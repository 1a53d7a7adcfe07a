//! Counterfactual explanations by interpolation in a Gaussian-mixture-shaped
//! latent space.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
