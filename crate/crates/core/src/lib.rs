//! CPU implementation of an anisotropic 3D global-convolutional adversarial
//! network for volumetric prostate MR segmentation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`autodiff`], [`ops`]: a reverse-mode autodiff engine with
//!   anisotropic 3D convolution, pooling, batch norm and trilinear upsampling.
//! - [`nn`]: the ResNet-50-derived generator with global-convolution and
//!   boundary-refinement decoder blocks, and the six-layer discriminator.
//! - [`loss`], [`optim`]: the hybrid adversarial objective and Adam.
//! - [`data`]: MetaImage I/O, resampling, normalization, augmentation, patch
//!   sampling and synthetic phantoms.
//! - [`train`], [`inference`], [`metrics`]: training orchestration and
//!   checkpoints, sliding-window prediction, and DSC / ABD / 95% HD.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod inference;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;

pub use autodiff::{gradcheck, GradcheckReport, Tape, Var};
pub use error::{Error, Result};
pub use ops::{Activation, ConvSpec, PoolSpec};
pub use tensor::{Dtype, Element, Fill, Tensor};
