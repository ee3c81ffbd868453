use super::*;
use crate::data::augment::AugmentConfig;
use crate::data::phantom::phantom_generate;
use crate::data::preprocess::prepare;
use crate::data::volume::Spacing;
use crate::nn::Preset;

fn small_config(steps: u64) -> TrainConfig {
    TrainConfig {
        preset: Preset::Tiny,
        patch: [8, 32, 32],
        steps,
        seed: 7,
        checkpoint_every: 2,
        ..TrainConfig::default()
    }
}

fn phantoms(n: usize) -> Vec<Volume> {
    phantom_generate(3, n, [16, 48, 48], Spacing::new(1.0, 1.0, 1.5).unwrap())
        .unwrap()
        .iter()
        .map(|v| prepare(v).unwrap())
        .collect()
}

#[test]
fn zero_steps_write_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (t, records) = train(&phantoms(2), &small_config(0), Some(dir.path())).unwrap();
    assert!(records.is_empty());
    assert_eq!(t.step, 0);
    let mut files: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, vec!["checkpoint_000000.gcan", METRICS_FILE]);
    assert_eq!(
        fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap(),
        format!("{METRICS_HEADER}\n")
    );
}

#[test]
fn empty_dataset_is_rejected() {
    let mut t = Trainer::new(small_config(1)).unwrap();
    assert!(t.run(&[], None).is_err());
}

#[test]
fn fresh_losses_are_finite_and_discriminator_starts_at_two_ln_two() {
    let data = phantoms(2);
    let mut t = Trainer::new(small_config(1)).unwrap();
    let r = t.step_once(&data).unwrap();
    assert!(r.loss_g.is_finite());
    let d = r.loss_d.unwrap();
    assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 0.2, "{d}");
}

#[test]
fn generator_loss_descends_on_a_fixed_batch() {
    let data = phantoms(2);
    let mut t = Trainer::new(small_config(1)).unwrap();
    t.discriminator.params.zero_params();
    let batch = t.batch_for_step(&data, 0).unwrap();
    let losses: Vec<f64> = (0..8)
        .map(|s| {
            train_step(
                &mut t.generator,
                &mut t.discriminator,
                &batch,
                &t.config,
                &mut t.optimizers,
                s,
            )
            .unwrap()
            .loss_g
        })
        .collect();
    assert!(losses[7] < losses[0], "{losses:?}");
}

#[test]
fn discriminator_loss_descends_with_generator_frozen() {
    let data = phantoms(2);
    let mut t = Trainer::new(small_config(1)).unwrap();
    let batch = t.batch_for_step(&data, 0).unwrap();
    let pred = t.generator.predict(&batch.images).unwrap();
    let losses: Vec<f64> = (0..20)
        .map(|s| discriminator_step(&mut t.discriminator, &pred, &batch, &mut t.optimizers.discriminator, s).unwrap())
        .collect();
    assert!(losses[19] < losses[0], "{losses:?}");
}

#[test]
fn disabled_discriminator_is_untouched() {
    let data = phantoms(2);
    let mut cfg = small_config(2);
    cfg.adversarial = false;
    let (t, records) = train(&data, &cfg, None).unwrap();
    assert!(records.iter().all(|r| r.loss_d.is_none()));
    assert_eq!(t.discriminator, Trainer::new(cfg).unwrap().discriminator);
}

#[test]
fn same_seed_same_metrics_log() {
    let data = phantoms(2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&data, &small_config(3), Some(a.path())).unwrap();
    train(&data, &small_config(3), Some(b.path())).unwrap();
    let read = |d: &Path| fs::read_to_string(d.join(METRICS_FILE)).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(read(a.path()).lines().count(), 4);
}

#[test]
fn resume_matches_the_uninterrupted_run() {
    let data = phantoms(2);
    let full_dir = tempfile::tempdir().unwrap();
    let (full, _) = train(&data, &small_config(4), Some(full_dir.path())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    train(&data, &small_config(2), Some(dir.path())).unwrap();
    let mut ckpt = load_checkpoint(Trainer::checkpoint_path(dir.path(), 2)).unwrap();
    ckpt.config.steps = 4;
    let mut resumed = Trainer::from_checkpoint(ckpt).unwrap();
    resumed.run(&data, Some(dir.path())).unwrap();

    let read = |d: &Path| fs::read_to_string(d.join(METRICS_FILE)).unwrap();
    assert_eq!(read(dir.path()), read(full_dir.path()));
    assert_eq!(resumed.generator, full.generator);
    assert_eq!(resumed.discriminator, full.discriminator);
    assert_eq!(resumed.optimizers, full.optimizers);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = phantoms(1);
    let mut cfg = small_config(1);
    cfg.augment = AugmentConfig::OFF;
    let (t, _) = train(&data, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.gcan"), dir.path().join("b.gcan"));
    save_checkpoint(&p1, &t.checkpoint()).unwrap();
    let loaded = load_checkpoint(&p1).unwrap();
    assert_eq!(loaded, t.checkpoint());
    save_checkpoint(&p2, &loaded).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    let back = Trainer::from_checkpoint(loaded).unwrap();
    assert_eq!(back.generator, t.generator);
    assert_eq!(back.running_dsc(), t.running_dsc());
}

#[test]
fn corrupt_or_mismatched_checkpoints_are_rejected() {
    let t = Trainer::new(small_config(0)).unwrap();
    let bytes = t.checkpoint().to_bytes().unwrap();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let err = Checkpoint::from_bytes(&bad_magic).unwrap_err().to_string();
    assert!(err.contains("magic"), "{err}");

    let mut bad_version = bytes.clone();
    bad_version[4] = 2;
    let err = Checkpoint::from_bytes(&bad_version).unwrap_err().to_string();
    assert!(err.contains("version 2"), "{err}");

    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());

    let mut other = t.checkpoint();
    other.config.gc_kernel = [9, 9, 3];
    let err = Trainer::from_checkpoint(other).unwrap_err().to_string();
    assert!(err.contains("shape"), "{err}");
}

#[test]
fn batch_dsc_counts_overlap() {
    let p = Tensor::from_vec(&[4], vec![0.9f32, 0.6, 0.1, 0.2]).unwrap();
    let l = Tensor::from_vec(&[4], vec![1.0f32, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(batch_dsc(&p, &l), 0.5);
}
