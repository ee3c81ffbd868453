use std::fmt;
use std::fs;
use std::path::Path;

use gcanet::data::{
    load_dataset, prepare, read_metaimage, resample, resample_to, write_metaimage, write_metaimage_as, ElementType,
    Spacing, Volume,
};
use gcanet::inference::{sliding_window_predict, threshold_mask};
use gcanet::metrics::{evaluate_with, Mask, SuperiorEnd};
use gcanet::nn::{
    build_discriminator, build_generator, count_conv_layers, count_parameters, Discriminator, Generator, Model,
    DEFAULT_GC_KERNEL,
};
use gcanet::train::{kfold_split, load_checkpoint, TrainConfig, Trainer, METRICS_FILE};
use gcanet::Error;

use crate::format::thousands;
use crate::{ConvertArgs, EvalArgs, InferArgs, InspectArgs, PhantomArgs, TrainArgs};

/// Encoder parameter total of the reference 2D ResNet-50 without its head.
const REFERENCE_ENCODER_PARAMS: usize = 23_507_904;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::Usage(_) | CliError::Data(Error::Config(_)))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult = Result<(), CliError>;

fn train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "config file {} does not exist",
                    path.display()
                )));
            }
            TrainConfig::load(path)?
        }
        None => TrainConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.preset {
        cfg.preset = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> CliResult {
    let cfg = train_config(&a)?;
    if !a.data.is_dir() {
        return Err(CliError::Data(Error::InvalidArgument(format!(
            "data directory {} does not exist",
            a.data.display()
        ))));
    }
    let mut cases = load_dataset(&a.data)?;
    if cases.is_empty() {
        return Err(CliError::Data(Error::InvalidArgument(format!(
            "no NAME.mhd / NAME_segmentation.mhd pairs in {}",
            a.data.display()
        ))));
    }
    if let (Some(fold), Some(folds)) = (a.fold, a.folds) {
        if fold >= folds {
            return Err(CliError::Usage(format!("--fold {fold} must be below --folds {folds}")));
        }
        let groups = kfold_split(cases.len(), folds, cfg.seed)?;
        let held: Vec<String> = groups[fold].iter().map(|&i| cases[i].name.clone()).collect();
        println!("holding out fold {fold}: {}", held.join(" "));
        cases.retain(|c| !held.contains(&c.name));
    }
    let volumes = cases
        .iter()
        .map(|c| prepare(&c.volume))
        .collect::<gcanet::Result<Vec<Volume>>>()?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let mut ckpt = load_checkpoint(path)?;
            ckpt.config.steps = cfg.steps;
            Trainer::from_checkpoint(ckpt)?
        }
        None => Trainer::new(cfg)?,
    };
    let records = trainer.run(&volumes, Some(&a.out))?;
    let last = Trainer::checkpoint_path(&a.out, trainer.step);
    match records.last() {
        Some(r) => println!(
            "trained {} steps on {} volumes: loss_g {:.4}, train dsc {:.3}",
            trainer.step,
            volumes.len(),
            r.loss_g,
            r.train_dsc
        ),
        None => println!("no steps to run; model at step {}", trainer.step),
    }
    println!("checkpoint: {}", last.display());
    println!("metrics log: {}", a.out.join(METRICS_FILE).display());
    Ok(())
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(Error::InvalidArgument(format!(
            "{what} {} does not exist",
            path.display()
        ))))
    }
}

pub fn infer(a: InferArgs) -> CliResult {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.input, "input volume")?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!(
            "--threshold {} must lie in [0, 1]",
            a.threshold
        )));
    }
    let trainer = Trainer::from_checkpoint(load_checkpoint(&a.checkpoint)?)?;
    let input = read_metaimage(&a.input)?;
    let prepared = prepare(&input)?;
    let patch = trainer.config.patch;
    let stride = patch.map(|p| (p / 2).max(1));
    let prob = sliding_window_predict(&trainer.generator, &prepared, patch, stride)?;
    let prob = resample_to(&prob, input.spacing, input.extents())?.with_origin(input.origin);
    let mask = threshold_mask(&prob, a.threshold)?;
    write_metaimage_as(&mask, &a.out, ElementType::Uchar)?;
    if let Some(p) = &a.prob_out {
        write_metaimage(&prob, p)?;
    }
    let fg = mask.values().iter().filter(|&&v| v > 0.0).count();
    println!("wrote {} ({} foreground voxels of {})", a.out.display(), fg, mask.len());
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult {
    require_file(&a.pred, "prediction")?;
    require_file(&a.gt, "ground truth")?;
    let pred = read_metaimage(&a.pred)?;
    let gt = read_metaimage(&a.gt)?;
    let superior = if a.superior_low_z {
        SuperiorEnd::LowZ
    } else {
        SuperiorEnd::HighZ
    };
    let report = evaluate_with(&Mask::from_values(&pred), &Mask::from_values(&gt), gt.spacing, superior)?;
    println!("{report}");
    if let Some(path) = &a.csv {
        fs::write(path, report.to_csv())
            .map_err(|e| CliError::Data(Error::InvalidArgument(format!("{}: {e}", path.display()))))?;
    }
    Ok(())
}

pub fn phantom(a: PhantomArgs) -> CliResult {
    let [x, y, z] = a.spacing;
    let spacing = Spacing::new(x, y, z).map_err(|e| CliError::Usage(e.to_string()))?;
    let cases = gcanet::data::phantom_generate(a.seed, a.count, a.extents, spacing)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .into_iter()
        .enumerate()
        .map(|(i, volume)| gcanet::data::Case {
            name: format!("phantom_{i:03}"),
            volume,
        })
        .collect::<Vec<_>>();
    gcanet::data::write_dataset(&a.out, &cases)?;
    println!("wrote {} phantoms to {}", cases.len(), a.out.display());
    Ok(())
}

pub fn convert(a: ConvertArgs) -> CliResult {
    require_file(&a.input, "input volume")?;
    let mut v = read_metaimage(&a.input)?;
    if let Some([x, y, z]) = a.resample {
        let target = Spacing::new(x, y, z).map_err(|e| CliError::Usage(e.to_string()))?;
        v = resample(&v, target)?;
    }
    if a.round {
        v.values_mut().iter_mut().for_each(|x| *x = x.round());
    }
    write_metaimage_as(&v, &a.out, a.element_type)?;
    let [nz, ny, nx] = v.extents();
    println!("wrote {} as {} ({nx} x {ny} x {nz})", a.out.display(), a.element_type);
    Ok(())
}

fn count_row(name: &str, model: &impl Model<f32>) -> String {
    format!(
        "{name:<16} {:>12} {:>14}",
        count_conv_layers(model),
        thousands(count_parameters(model))
    )
}

fn print_counts(generator: &Generator<f32>, discriminator: &Discriminator<f32>) {
    let enc = generator.encoder_parameter_count();
    let enc_convs = generator.encoder.convs().len();
    println!(
        "preset {}, GC kernel (x, y, z) = {:?}",
        generator.preset, generator.gc_kernel
    );
    println!("{:<16} {:>12} {:>14}", "network", "conv layers", "parameters");
    println!("{:<16} {:>12} {:>14}", "encoder", enc_convs, thousands(enc));
    println!("{}", count_row("generator", generator));
    println!("{}", count_row("discriminator", discriminator));
    let diff = (enc as f64 - REFERENCE_ENCODER_PARAMS as f64) / REFERENCE_ENCODER_PARAMS as f64 * 100.0;
    println!(
        "encoder vs reference 2D ResNet-50 ({}): {:+.4}%",
        thousands(REFERENCE_ENCODER_PARAMS),
        diff
    );
}

pub fn inspect(a: InspectArgs) -> CliResult {
    let (generator, discriminator) = match (&a.checkpoint, a.preset) {
        (Some(path), _) => {
            require_file(path, "checkpoint")?;
            let t = Trainer::from_checkpoint(load_checkpoint(path)?)?;
            println!("checkpoint {} at step {}", path.display(), t.step);
            (t.generator, t.discriminator)
        }
        (None, Some(preset)) => (
            build_generator(preset, DEFAULT_GC_KERNEL, 0)?,
            build_discriminator(preset, 0)?,
        ),
        (None, None) => return Err(CliError::Usage("inspect needs --checkpoint or --preset".into())),
    };
    print_counts(&generator, &discriminator);
    Ok(())
}
