//! Minimal differentiable compute layer: tensors, layers, spectral
//! normalization, Adam, and a finite-difference gradient-check harness.

mod adam;
mod checkpoint;
mod gradcheck;
mod network;
pub mod ops;
mod params;
mod scalar;
pub mod spectral;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, GradLoss, SquaredLoss};
pub use network::{DownsampleVariant, LayerSpec, Network, Tape, TapeNode, BLOCK_LEAKY_SLOPE};
pub use params::{Grads, ParamEntry, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor5;

#[cfg(test)]
mod tests;
