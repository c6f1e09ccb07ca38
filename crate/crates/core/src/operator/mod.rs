//! Adaptive spectral layers and networks.

pub mod flops;
pub mod fno;
pub mod kernel;
pub mod layer;
pub mod multiplier;
pub mod network;

pub use flops::{count_flops, count_flops_for, FlopReport};
pub use fno::FnoLayer;
pub use kernel::{dense_layer_forward, materialize_kernel, materialize_kernel_with_density, DenseKernel};
pub use layer::AbleLayer;
pub use multiplier::{retained_indices, spectral_mix, MultiplierKind, SpectralMultiplier};
pub use network::{AbleNetwork, NetworkConfig};
