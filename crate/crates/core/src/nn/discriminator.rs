//! Fully convolutional discriminator over (segmentation, image) pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::blocks::{init_layers, ConvLayer, Ctx};
use crate::nn::generator::Preset;
use crate::nn::params::{Bound, ParamStore};
use crate::nn::Model;
use crate::ops::{Activation, ConvSpec};
use crate::tensor::Element;

const WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
const LEAK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T = f32> {
    pub convs: Vec<ConvLayer>,
    /// Activation after each conv; the last conv has none.
    pub activations: Vec<Option<Activation>>,
    pub params: ParamStore<T>,
}

/// Five strided 3x3x3 convs with leaky ReLU, then a 1x1x1 conv to one
/// channel. The last layer starts at zero so a fresh discriminator outputs
/// logit 0 everywhere.
pub fn build_discriminator<T: Element>(preset: Preset, seed: u64) -> Result<Discriminator<T>> {
    let mut d = Discriminator::<T>::skeleton(preset);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs: Vec<&ConvLayer> = d.convs.iter().collect();
    init_layers(&convs, &[], &mut d.params, &mut rng)?;
    let last = d.convs.last().map(ConvLayer::weight_name).unwrap_or_default();
    d.params
        .param_mut(&last)?
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = T::zero());
    Ok(d)
}

impl<T: Element> Discriminator<T> {
    pub fn skeleton(preset: Preset) -> Self {
        let div = preset.width_divisor();
        let mut convs = Vec::with_capacity(6);
        let mut cin = 2;
        for (i, w) in WIDTHS.iter().map(|w| w / div).enumerate() {
            convs.push(ConvLayer::new(
                format!("disc.conv{}", i + 1),
                ConvSpec::new(cin, w, [3, 3, 3])
                    .stride([2, 2, 2])
                    .padding([1, 1, 1])
                    .bias(true),
            ));
            cin = w;
        }
        convs.push(ConvLayer::new(
            "disc.conv6",
            ConvSpec::new(cin, 1, [1, 1, 1]).bias(true),
        ));
        let mut activations = vec![Some(Activation::LeakyRelu(LEAK)); 5];
        activations.push(None);
        Self {
            convs,
            activations,
            params: ParamStore::default(),
        }
    }

    /// Records `D(seg, x)` on `tape` and returns one logit per batch item,
    /// shape `(N,)`, with the parameter bindings.
    pub fn forward(&self, tape: &mut Tape<T>, seg: Var, x: Var, trainable: bool) -> Result<(Var, Bound)> {
        let vars = self.params.bind(tape, trainable);
        let logits = self.forward_with(tape, &vars, seg, x)?;
        Ok((logits, vars))
    }

    /// Forward pass using existing parameter bindings.
    pub fn forward_with(&self, tape: &mut Tape<T>, vars: &Bound, seg: Var, x: Var) -> Result<Var> {
        let (ds, dx) = (tape.value(seg).dims5()?, tape.value(x).dims5()?);
        if ds != dx || ds[1] != 1 {
            return Err(Error::Shape(format!(
                "discriminator needs matching single-channel inputs, got {ds:?} and {dx:?}"
            )));
        }
        let mut ctx = Ctx::new(tape, vars, &self.params, true);
        let mut h = ctx.tape.concat_channels(seg, x)?;
        for (conv, act) in self.convs.iter().zip(&self.activations) {
            h = conv.forward(&mut ctx, h)?;
            if let Some(a) = act {
                h = ctx.tape.activation(h, *a);
            }
        }
        ctx.tape.mean_per_item(h)
    }

    pub fn cast<U: Element>(&self) -> Discriminator<U> {
        Discriminator {
            convs: self.convs.clone(),
            activations: self.activations.clone(),
            params: self.params.cast(),
        }
    }
}

impl<T: Element> Model<T> for Discriminator<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn conv_layers(&self) -> Vec<&ConvLayer> {
        self.convs.iter().collect()
    }
}
