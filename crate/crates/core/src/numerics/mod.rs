//! Dense `f64` tensors, tape-based reverse-mode differentiation and Adam.

mod adam;
mod graph;
mod init;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};
pub use init::{derive_seed, seeded_normal_init};
pub use tensor::{fingerprint_all, Tensor};
