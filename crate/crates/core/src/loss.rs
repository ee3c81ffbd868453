//! Hybrid adversarial objective: weighted cross-entropy plus a GAN term.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Discriminator;
use crate::tensor::{Element, Tensor};

const WEIGHT_MIN: f64 = 0.1;
const WEIGHT_MAX: f64 = 10.0;

/// Weights of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Multiplier of the cross-entropy term.
    pub lambda: f64,
    pub w_fg: f64,
    pub w_bg: f64,
}

impl LossWeights {
    pub fn new(lambda: f64, w_fg: f64, w_bg: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(w_fg > 0.0 && w_bg > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "class weights must be > 0, got ({w_fg}, {w_bg})"
            )));
        }
        Ok(Self { lambda, w_fg, w_bg })
    }

    /// Class weights from `labels` with the given cross-entropy multiplier.
    pub fn balanced<T: Element>(lambda: f64, labels: &Tensor<T>) -> Result<Self> {
        let (w_fg, w_bg) = class_weights(labels);
        Self::new(lambda, w_fg, w_bg)
    }
}

/// Inverse-frequency class weights `N / (2 N_c)`, clamped to `[0.1, 10]`;
/// a class with no voxels gets weight 1. Returns `(w_fg, w_bg)`.
pub fn class_weights<T: Element>(labels: &Tensor<T>) -> (f64, f64) {
    let total = labels.len();
    let fg = labels.data().iter().filter(|&&v| v > T::lit(0.5)).count();
    let weight = |count: usize| {
        if count == 0 {
            1.0
        } else {
            (total as f64 / (2.0 * count as f64)).clamp(WEIGHT_MIN, WEIGHT_MAX)
        }
    };
    (weight(fg), weight(total - fg))
}

/// Tape handles of the generator objective's terms.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorObjective {
    pub total: Var,
    pub cross_entropy: Var,
    /// Absent when training without a discriminator.
    pub adversarial: Option<Var>,
}

/// `lambda * weighted_bce(pred, labels) + gan_bce(D(pred, image), true)`.
///
/// The discriminator's parameters are recorded as constants, so this loss
/// never produces discriminator gradients.
pub fn generator_objective<T: Element>(
    tape: &mut Tape<T>,
    pred: Var,
    image: Var,
    labels: &Tensor<T>,
    disc: Option<&Discriminator<T>>,
    weights: LossWeights,
) -> Result<GeneratorObjective> {
    let bce = tape.weighted_bce(pred, labels, T::lit(weights.w_fg), T::lit(weights.w_bg))?;
    let scaled = tape.scale(bce, T::lit(weights.lambda));
    let (total, adversarial) = match disc {
        Some(d) => {
            let vars = d.params.bind(tape, false);
            let logits = d.forward_with(tape, &vars, pred, image)?;
            let adv = tape.gan_bce(logits, true)?;
            (tape.add(scaled, adv)?, Some(adv))
        }
        None => (scaled, None),
    };
    Ok(GeneratorObjective {
        total,
        cross_entropy: bce,
        adversarial,
    })
}

/// `gan_bce(D(pred, image), false) + gan_bce(D(labels, image), true)`.
///
/// `pred` is detached first, so no gradient reaches the generator.
pub fn discriminator_objective<T: Element>(
    tape: &mut Tape<T>,
    disc: &Discriminator<T>,
    disc_vars: &crate::nn::Bound,
    pred: Var,
    labels: Var,
    image: Var,
) -> Result<Var> {
    let fake = tape.detach(pred);
    let fake_logits = disc.forward_with(tape, disc_vars, fake, image)?;
    let real_logits = disc.forward_with(tape, disc_vars, labels, image)?;
    let fake_loss = tape.gan_bce(fake_logits, false)?;
    let real_loss = tape.gan_bce(real_logits, true)?;
    tape.add(fake_loss, real_loss)
}
