//! Unsupervised reference-guided image-to-image translation.
//!
//! The toolkit trains three networks — a generator conditioned through
//! adaptive instance normalization, a style encoder, and a dual-headed
//! discriminator whose contrastive branch supervises style transfer — and
//! ships the matching data pipeline, evaluation metrics (FID/mFID,
//! translation accuracy) and latent-space analyses (similarity search,
//! style interpolation).
//!
//! Everything is generic over the float type: production runs use `f32`,
//! verification suites instantiate `f64`. The autograd engine builds its
//! backward passes out of the same differentiable ops, so higher-order
//! gradients (needed by the R1 penalty) are exact.

pub mod augmentation;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod networks;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod trainer;
pub mod vis;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense tensor with dynamic rank; the single array type used throughout.
pub type Tensor<S> = ndarray::ArrayD<S>;
