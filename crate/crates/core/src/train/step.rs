//! One alternating discriminator/generator update.

use crate::autodiff::Tape;
use crate::data::volume::Volume;
use crate::error::{Error, Result};
use crate::loss::{discriminator_objective, generator_objective, LossWeights};
use crate::nn::blocks::BN_MOMENTUM;
use crate::nn::{Discriminator, Generator, ParamStore};
use crate::optim::AdamState;
use crate::tensor::Tensor;
use crate::train::config::TrainConfig;

/// Image and label patches stacked as `(N, 1, Z, Y, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Tensor<f32>,
}

impl Batch {
    /// Stacks labelled patches of equal extents.
    pub fn from_patches(patches: &[Volume]) -> Result<Self> {
        let first = patches
            .first()
            .ok_or_else(|| Error::InvalidArgument("a batch needs at least one patch".into()))?;
        let ext = first.extents();
        let mut images = Vec::with_capacity(first.len() * patches.len());
        let mut labels = Vec::with_capacity(first.len() * patches.len());
        for p in patches {
            if p.extents() != ext {
                return Err(Error::Shape(format!(
                    "batch patches differ: {:?} vs {ext:?}",
                    p.extents()
                )));
            }
            let label = p
                .label()
                .ok_or_else(|| Error::InvalidArgument("training patches need labels".into()))?;
            images.extend_from_slice(p.values());
            labels.extend(label.iter().map(|&l| l as f32));
        }
        let shape = [patches.len(), 1, ext[0], ext[1], ext[2]];
        Ok(Self {
            images: Tensor::from_vec(&shape, images)?,
            labels: Tensor::from_vec(&shape, labels)?,
        })
    }
}

/// Adam states of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub generator: AdamState<f32>,
    pub discriminator: AdamState<f32>,
}

#[derive(Debug, Clone)]
pub struct StepLosses {
    pub loss_g: f64,
    /// Absent when the discriminator is disabled.
    pub loss_d: Option<f64>,
    /// Generator output for the batch, before this step's update.
    pub prediction: Tensor<f32>,
}

/// Order-sensitive hash of every parameter's bits.
pub fn fingerprint(params: &ParamStore<f32>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (name, t) in params.params() {
        for b in name
            .bytes()
            .map(u64::from)
            .chain(t.data().iter().map(|v| u64::from(v.to_bits())))
        {
            h = (h ^ b).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn finite(v: f64, step: u64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { step, what })
    }
}

/// One discriminator update on a fixed prediction; returns its loss.
pub fn discriminator_step(
    d: &mut Discriminator<f32>,
    prediction: &Tensor<f32>,
    batch: &Batch,
    state: &mut AdamState<f32>,
    step: u64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let pred = tape.constant(prediction.clone());
    let labels = tape.constant(batch.labels.clone());
    let image = tape.constant(batch.images.clone());
    let vars = d.params.bind(&mut tape, true);
    let loss = discriminator_objective(&mut tape, d, &vars, pred, labels, image)?;
    let value = finite(tape.value(loss).data()[0] as f64, step, "loss_d")?;
    tape.backward(loss)?;
    let grads = vars.grads(&tape)?;
    state.step(&mut d.params, &grads)?;
    Ok(value)
}

/// `d_steps_per_g` discriminator updates against the current generator
/// output, then one generator update through the updated discriminator.
/// Batch-norm running statistics follow the generator's training-mode pass.
pub fn train_step(
    g: &mut Generator<f32>,
    d: &mut Discriminator<f32>,
    batch: &Batch,
    cfg: &TrainConfig,
    opt: &mut Optimizers,
    step: u64,
) -> Result<StepLosses> {
    let adversarial = cfg.adversarial;
    let mut tape = Tape::new();
    let x = tape.constant(batch.images.clone());
    let pass = g.forward(&mut tape, x, true, true)?;
    let prediction = tape.value(pass.output).clone();

    let mut loss_d = None;
    if adversarial {
        let g_before = fingerprint(&g.params);
        for _ in 0..cfg.d_steps_per_g {
            loss_d = Some(discriminator_step(d, &prediction, batch, &mut opt.discriminator, step)?);
        }
        assert_eq!(
            g_before,
            fingerprint(&g.params),
            "discriminator update touched the generator"
        );
    }

    let weights = LossWeights::balanced(cfg.lambda, &batch.labels)?;
    let objective = generator_objective(
        &mut tape,
        pass.output,
        x,
        &batch.labels,
        adversarial.then_some(&*d),
        weights,
    )?;
    let loss_g = finite(tape.value(objective.total).data()[0] as f64, step, "loss_g")?;
    tape.backward(objective.total)?;
    let grads = pass.vars.grads(&tape)?;
    let d_before = fingerprint(&d.params);
    opt.generator.step(&mut g.params, &grads)?;
    g.update_running_stats(&pass.bn_stats, BN_MOMENTUM)?;
    assert_eq!(
        d_before,
        fingerprint(&d.params),
        "generator update touched the discriminator"
    );

    Ok(StepLosses {
        loss_g,
        loss_d,
        prediction,
    })
}
