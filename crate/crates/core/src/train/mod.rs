//! Adversarial training loop, checkpointing and cross-validation splits.

pub mod checkpoint;
pub mod config;
pub mod kfold;
pub mod step;

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::TrainConfig;
pub use kfold::kfold_split;
pub use step::{discriminator_step, train_step, Batch, Optimizers, StepLosses};

use crate::data::augment::augment;
use crate::data::patch::sample_patch;
use crate::data::volume::Volume;
use crate::error::{Error, Result};
use crate::nn::{build_discriminator, build_generator, Discriminator, Generator, ParamStore};
use crate::optim::AdamState;
use crate::tensor::Tensor;

/// Steps averaged by the running train DSC.
pub const DSC_WINDOW: usize = 20;
pub const METRICS_HEADER: &str = "step,loss_g,loss_d,train_dsc";
pub const METRICS_FILE: &str = "metrics.csv";

const DISCRIMINATOR_SEED_OFFSET: u64 = 1;
const DATA_SEED_OFFSET: u64 = 2;

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Steps completed, counting this one.
    pub step: u64,
    pub loss_g: f64,
    pub loss_d: Option<f64>,
    /// Mean batch DSC over the last [`DSC_WINDOW`] steps.
    pub train_dsc: f64,
}

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let loss_d = self.loss_d.map_or("NA".to_string(), |v| v.to_string());
        format!("{},{},{},{}", self.step, self.loss_g, loss_d, self.train_dsc)
    }
}

/// Dice overlap of `prediction >= 0.5` with the labels.
pub fn batch_dsc(prediction: &Tensor<f32>, labels: &Tensor<f32>) -> f64 {
    let (mut both, mut total) = (0usize, 0usize);
    for (&p, &l) in prediction.data().iter().zip(labels.data()) {
        let (p, l) = (p >= 0.5, l >= 0.5);
        both += (p && l) as usize;
        total += p as usize + l as usize;
    }
    if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    }
}

/// All mutable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub optimizers: Optimizers,
    /// Steps completed.
    pub step: u64,
    rng_seed: u64,
    recent_dsc: VecDeque<f64>,
}

fn restore(store: &mut ParamStore<f32>, tensors: &mut BTreeMap<String, Tensor<f32>>) -> Result<()> {
    let names: Vec<(String, bool)> = store
        .params()
        .keys()
        .map(|k| (k.clone(), true))
        .chain(store.buffers().keys().map(|k| (k.clone(), false)))
        .collect();
    for (name, is_param) in names {
        let t = tensors
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let slot = if is_param {
            store.param_mut(&name)?
        } else {
            store.buffer_mut(&name)?
        };
        if slot.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "{name} has shape {:?} but the configured model expects {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok(())
}

fn check_optimizer(state: &AdamState<f32>, store: &ParamStore<f32>, which: &str) -> Result<()> {
    for (name, p) in store.params() {
        for moments in [&state.first, &state.second] {
            match moments.get(name) {
                Some(m) if m.shape() == p.shape() => {}
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "{which} optimizer state for {name} is missing or misshapen"
                    )))
                }
            }
        }
    }
    if state.first.len() != store.params().len() || state.second.len() != store.params().len() {
        return Err(Error::Checkpoint(format!("{which} optimizer state has extra tensors")));
    }
    Ok(())
}

impl Trainer {
    /// Freshly initialized networks for `config`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = build_generator(config.preset, config.gc_kernel, config.seed)?;
        let discriminator = build_discriminator(config.preset, config.seed.wrapping_add(DISCRIMINATOR_SEED_OFFSET))?;
        let optimizers = Optimizers {
            generator: AdamState::new(config.adam(), &generator.params)?,
            discriminator: AdamState::new(config.adam(), &discriminator.params)?,
        };
        Ok(Self {
            rng_seed: config.seed.wrapping_add(DATA_SEED_OFFSET),
            config,
            generator,
            discriminator,
            optimizers,
            step: 0,
            recent_dsc: VecDeque::with_capacity(DSC_WINDOW),
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut t = Self::new(ckpt.config)?;
        let mut tensors = ckpt.tensors;
        restore(&mut t.generator.params, &mut tensors)?;
        restore(&mut t.discriminator.params, &mut tensors)?;
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        check_optimizer(&ckpt.adam_g, &t.generator.params, "generator")?;
        check_optimizer(&ckpt.adam_d, &t.discriminator.params, "discriminator")?;
        t.optimizers = Optimizers {
            generator: ckpt.adam_g,
            discriminator: ckpt.adam_d,
        };
        t.step = ckpt.step;
        t.rng_seed = ckpt.rng_seed;
        t.recent_dsc = ckpt.recent_dsc.into_iter().collect();
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let g = &self.generator.params;
        let tensors = g
            .params()
            .iter()
            .chain(g.buffers())
            .chain(self.discriminator.params.params())
            .map(|(k, t)| (k.clone(), t.clone()))
            .collect();
        Checkpoint {
            config: self.config.clone(),
            step: self.step,
            tensors,
            adam_g: self.optimizers.generator.clone(),
            adam_d: self.optimizers.discriminator.clone(),
            rng_seed: self.rng_seed,
            recent_dsc: self.recent_dsc.iter().copied().collect(),
        }
    }

    pub fn running_dsc(&self) -> f64 {
        if self.recent_dsc.is_empty() {
            0.0
        } else {
            self.recent_dsc.iter().sum::<f64>() / self.recent_dsc.len() as f64
        }
    }

    /// The random stream for step `step`, independent of all other steps.
    fn step_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(step);
        rng
    }

    /// Samples and augments the batch of step `step`.
    pub fn batch_for_step(&self, data: &[Volume], step: u64) -> Result<Batch> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training dataset is empty".into()));
        }
        let mut rng = self.step_rng(step);
        let patches = (0..self.config.batch_size)
            .map(|_| {
                let case = &data[rng.gen_range(0..data.len())];
                let patch = sample_patch(case, self.config.patch, &mut rng, self.config.force_fg_fraction)?;
                augment(&patch, &self.config.augment, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Batch::from_patches(&patches)
    }

    /// Runs one training step and returns its log row.
    pub fn step_once(&mut self, data: &[Volume]) -> Result<StepRecord> {
        let batch = self.batch_for_step(data, self.step)?;
        let losses = train_step(
            &mut self.generator,
            &mut self.discriminator,
            &batch,
            &self.config,
            &mut self.optimizers,
            self.step,
        )?;
        self.step += 1;
        if self.recent_dsc.len() == DSC_WINDOW {
            self.recent_dsc.pop_front();
        }
        self.recent_dsc.push_back(batch_dsc(&losses.prediction, &batch.labels));
        Ok(StepRecord {
            step: self.step,
            loss_g: losses.loss_g,
            loss_d: losses.loss_d,
            train_dsc: self.running_dsc(),
        })
    }

    /// Trains until `config.steps`. With an output directory, appends rows to
    /// its metrics log and writes a checkpoint at the start of a fresh run,
    /// every `checkpoint_every` steps and at the end.
    pub fn run(&mut self, data: &[Volume], out_dir: Option<&Path>) -> Result<Vec<StepRecord>> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training dataset is empty".into()));
        }
        if let Some(label_free) = data.iter().position(|v| v.label().is_none()) {
            return Err(Error::InvalidArgument(format!(
                "training volume {label_free} has no label"
            )));
        }
        let mut log = match out_dir {
            Some(dir) => Some(self.open_log(dir)?),
            None => None,
        };
        if let (Some(dir), 0) = (out_dir, self.step) {
            self.save_to(dir)?;
        }
        let mut records = Vec::new();
        while self.step < self.config.steps {
            let record = self.step_once(data)?;
            log::info!("{}", record.csv_row());
            if let (Some((file, path)), Some(dir)) = (log.as_mut(), out_dir) {
                writeln!(file, "{}", record.csv_row()).map_err(|e| Error::io(path.as_path(), e))?;
                if self.step.is_multiple_of(self.config.checkpoint_every) || self.step == self.config.steps {
                    file.flush().map_err(|e| Error::io(path.as_path(), e))?;
                    self.save_to(dir)?;
                }
            }
            records.push(record);
        }
        Ok(records)
    }

    fn open_log(&self, dir: &Path) -> Result<(fs::File, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let fresh = self.step == 0 || !path.exists();
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        }
        Ok((file, path))
    }

    /// Path of the checkpoint written after `step` steps.
    pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
        dir.join(format!("checkpoint_{step:06}.gcan"))
    }

    fn save_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::checkpoint_path(dir, self.step);
        save_checkpoint(&path, &self.checkpoint())?;
        Ok(path)
    }
}

/// Trains fresh networks on labelled, preprocessed volumes.
pub fn train(dataset: &[Volume], cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<(Trainer, Vec<StepRecord>)> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let records = trainer.run(dataset, out_dir)?;
    Ok((trainer, records))
}

#[cfg(test)]
mod tests;
