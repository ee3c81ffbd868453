//! Run configuration as flat `key=value` text.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::nn::{Generator, Preset, DEFAULT_GC_KERNEL};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    /// Multiplier of the cross-entropy term.
    pub lambda: f64,
    pub batch_size: usize,
    /// `(z, y, x)`.
    pub patch: [usize; 3],
    pub steps: u64,
    pub seed: u64,
    pub preset: Preset,
    /// `(x, y, z)`.
    pub gc_kernel: [usize; 3],
    pub augment: AugmentConfig,
    pub d_steps_per_g: usize,
    pub checkpoint_every: u64,
    /// Train the discriminator and add its term to the generator loss.
    pub adversarial: bool,
    pub force_fg_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            weight_decay: 1e-6,
            lambda: 100.0,
            batch_size: 2,
            patch: [32, 96, 96],
            steps: 800,
            seed: 0,
            preset: Preset::Paper,
            gc_kernel: DEFAULT_GC_KERNEL,
            augment: AugmentConfig::default(),
            d_steps_per_g: 1,
            checkpoint_every: 100,
            adversarial: true,
            force_fg_fraction: 0.5,
        }
    }
}

/// Config keys in serialization order.
pub const KEYS: [&str; 18] = [
    "lr",
    "betas",
    "weight_decay",
    "lambda",
    "batch_size",
    "patch",
    "steps",
    "seed",
    "preset",
    "gc_kernel",
    "augment.p_flip",
    "augment.p_rotate",
    "augment.p_noise",
    "augment.sigma_range",
    "d_steps_per_g",
    "checkpoint_every",
    "adversarial",
    "force_fg_fraction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` as the value of `{key}`")))
}

fn parse_list<T: FromStr + Copy + Default, const N: usize>(key: &str, value: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != N {
        return Err(Error::Config(format!(
            "`{key}` needs {N} comma-separated values, got `{value}`"
        )));
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse(key, p)?;
    }
    Ok(out)
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.betas.0,
            beta2: self.betas.1,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "lr" => self.lr = parse(key, value)?,
            "betas" => {
                let [a, b] = parse_list(key, value)?;
                self.betas = (a, b);
            }
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "patch" => self.patch = parse_list(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "preset" => self.preset = value.parse()?,
            "gc_kernel" => self.gc_kernel = parse_list(key, value)?,
            "augment.p_flip" => self.augment.p_flip = parse(key, value)?,
            "augment.p_rotate" => self.augment.p_rotate = parse(key, value)?,
            "augment.p_noise" => self.augment.p_noise = parse(key, value)?,
            "augment.sigma_range" => {
                let [a, b] = parse_list(key, value)?;
                self.augment.sigma_range = (a, b);
            }
            "d_steps_per_g" => self.d_steps_per_g = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "adversarial" => self.adversarial = parse(key, value)?,
            "force_fg_fraction" => self.force_fg_fraction = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Textual form of one field.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "betas" => join(&[self.betas.0, self.betas.1]),
            "weight_decay" => self.weight_decay.to_string(),
            "lambda" => self.lambda.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "patch" => join(&self.patch),
            "steps" => self.steps.to_string(),
            "seed" => self.seed.to_string(),
            "preset" => self.preset.to_string(),
            "gc_kernel" => join(&self.gc_kernel),
            "augment.p_flip" => self.augment.p_flip.to_string(),
            "augment.p_rotate" => self.augment.p_rotate.to_string(),
            "augment.p_noise" => self.augment.p_noise.to_string(),
            "augment.sigma_range" => join(&[self.augment.sigma_range.0, self.augment.sigma_range.1]),
            "d_steps_per_g" => self.d_steps_per_g.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "adversarial" => self.adversarial.to_string(),
            "force_fg_fraction" => self.force_fg_fraction.to_string(),
            _ => return None,
        })
    }

    /// Parses `key=value` lines over the defaults; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            cfg.set(key, value).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config: ")
            ))
        })
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("every key has a value")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.weight_decay >= 0.0) || !(self.lambda >= 0.0) {
            return bad("weight_decay and lambda must be non-negative".into());
        }
        if self.batch_size == 0 || self.d_steps_per_g == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, d_steps_per_g and checkpoint_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.force_fg_fraction) {
            return bad(format!(
                "force_fg_fraction must lie in [0, 1], got {}",
                self.force_fg_fraction
            ));
        }
        Generator::<f32>::check_extents(self.patch).map_err(|e| Error::Config(format!("patch: {e}")))?;
        Generator::<f32>::skeleton(self.preset, self.gc_kernel)
            .map_err(|e| Error::Config(format!("gc_kernel: {e}")))?;
        self.augment
            .validate()
            .map_err(|e| Error::Config(format!("augment: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_listed_values() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.lr, c.betas, c.weight_decay, c.lambda),
            (1e-3, (0.9, 0.999), 1e-6, 100.0)
        );
        assert_eq!((c.batch_size, c.patch, c.d_steps_per_g), (2, [32, 96, 96], 1));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.preset = Preset::Tiny;
        c.lr = 3.5e-4;
        c.augment.sigma_range = (0.25, 0.5);
        c.adversarial = false;
        let text = c.to_text();
        assert_eq!(TrainConfig::parse_text(&text).unwrap(), c);
        assert!(text.contains("augment.sigma_range=0.25,0.5\n"));
    }

    #[test]
    fn comments_blank_lines_and_errors() {
        let c = TrainConfig::parse_text("# run\n\nsteps = 5  # short\npreset=tiny\n").unwrap();
        assert_eq!((c.steps, c.preset), (5, Preset::Tiny));
        let err = TrainConfig::parse_text("steps=5\nbogus=1\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        assert!(TrainConfig::parse_text("lr=fast").is_err());
        assert!(TrainConfig::parse_text("patch=30,96,96").is_err());
        assert!(TrainConfig::parse_text("batch_size=0").is_err());
        assert!(TrainConfig::parse_text("steps").is_err());
    }
}
