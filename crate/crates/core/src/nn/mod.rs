//! Network architectures assembled from the autodiff ops.

pub mod blocks;
pub mod discriminator;
pub mod generator;
pub mod params;

pub use blocks::{BnLayer, Bottleneck, BrBlock, ConvLayer, Ctx, GcBlock, GcBlockSpec};
pub use discriminator::{build_discriminator, Discriminator};
pub use generator::{
    build_generator, Decoder, Encoder, Generator, GeneratorPass, Preset, DEFAULT_GC_KERNEL, XY_STRIDE, Z_STRIDE,
};
pub use params::{Bound, ParamStore};

use crate::tensor::Element;

/// A network with named parameters and a list of its convolutions.
pub trait Model<T: Element> {
    fn params(&self) -> &ParamStore<T>;

    fn conv_layers(&self) -> Vec<&ConvLayer>;
}

/// Trainable scalars: conv weights and biases plus batch-norm affine pairs.
pub fn count_parameters<T: Element>(model: &impl Model<T>) -> usize {
    model.params().count()
}

pub fn count_conv_layers<T: Element>(model: &impl Model<T>) -> usize {
    model.conv_layers().len()
}
