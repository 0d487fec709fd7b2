//! Permutation-equivariant networks for predicting interacting hard-disc
//! dynamics, plus the simulator, training harness, and file formats the
//! experiments need.
//!
//! The crate is self-contained: dense layers with hand-written backward
//! passes, Adam, a permutational layer that pools an inner network over all
//! object pairs, a 2D impulse-based hard-disc simulator, and a deterministic
//! training loop. Everything is seeded; identical configs give identical
//! results regardless of thread count.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod perm;
pub mod seeds;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{Error, Result};
pub use gradcheck::gradcheck;
pub use nn::{linear_backward, linear_forward, mse_loss, relu, relu_backward, LinearParams};
pub use perm::{
    pair_expand, perm_backward, perm_forward, ObjectSet, PermLayer, PermLayerConfig, Pooling,
    SetBatch,
};
pub use tensor::Tensor2;
