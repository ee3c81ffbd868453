use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gcanet::data::{read_metaimage, read_metaimage_typed, ElementType};

fn gcanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcanet"))
        .args(args)
        .output()
        .expect("spawn gcanet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_phantoms(dir: &Path, count: &str) {
    let o = gcanet(&[
        "phantom",
        "--seed",
        "5",
        "--count",
        count,
        "--out",
        path(dir),
        "--extents",
        "16,48,48",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn identical_masks_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    write_phantoms(dir.path(), "1");
    let gt = dir.path().join("phantom_000_segmentation.mhd");
    let csv = dir.path().join("report.csv");
    let o = gcanet(&["eval", "--pred", path(&gt), "--gt", path(&gt), "--csv", path(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("1.000"), "{out}");
    assert!(out.contains("0.00"), "{out}");
    let csv = fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("region,dsc,abd_mm,hd95_mm"), "{csv}");
    assert!(csv.contains("whole,1.000000,0.000000,0.000000"), "{csv}");
}

#[test]
fn usage_errors_exit_one_and_data_errors_exit_two() {
    assert_eq!(gcanet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gcanet(&[]).status.code(), Some(1));
    assert_eq!(gcanet(&["--help"]).status.code(), Some(0));
    let o = gcanet(&["eval", "--pred", "/nonexistent/a.mhd", "--gt", "/nonexistent/b.mhd"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    let o = gcanet(&[
        "train",
        "--data",
        path(dir.path()),
        "--out",
        path(dir.path()),
        "--set",
        "lr=fast",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = gcanet(&[
        "phantom",
        "--seed",
        "1",
        "--count",
        "1",
        "--out",
        path(dir.path()),
        "--extents",
        "4,4,4",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn phantom_then_convert_to_uchar() {
    let dir = tempfile::tempdir().unwrap();
    write_phantoms(dir.path(), "2");
    for name in ["phantom_000", "phantom_001"] {
        assert!(dir.path().join(format!("{name}.mhd")).is_file());
        assert!(dir.path().join(format!("{name}_segmentation.mhd")).is_file());
    }
    let src = dir.path().join("phantom_000.mhd");
    let dst = dir.path().join("rounded.mhd");
    let o = gcanet(&[
        "convert",
        "--in",
        path(&src),
        "--out",
        path(&dst),
        "--type",
        "MET_SHORT",
        "--round",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (v, ty) = read_metaimage_typed(&dst).unwrap();
    assert_eq!(ty, ElementType::Short);
    assert_eq!(v.extents(), read_metaimage(&src).unwrap().extents());
    assert!(v.values().iter().all(|x| x.fract() == 0.0));
}

#[test]
fn inspect_reports_the_encoder_reference() {
    let o = gcanet(&["inspect", "--preset", "paper"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("23,508,032"), "{out}");
    assert!(out.contains("23,507,904"), "{out}");
    assert!(out.contains("25,070,113"), "{out}");
}

#[test]
fn train_infer_eval_round_trip() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    write_phantoms(data.path(), "3");
    let o = gcanet(&[
        "train",
        "--data",
        path(data.path()),
        "--out",
        path(run.path()),
        "--preset",
        "tiny",
        "--steps",
        "2",
        "--set",
        "patch=8,32,32",
        "--set",
        "checkpoint_every=1",
        "--fold",
        "0",
        "--folds",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("holding out fold 0"));
    let log = fs::read_to_string(run.path().join("metrics.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
    let ckpt = run.path().join("checkpoint_000002.gcan");
    assert!(ckpt.is_file());

    let input = data.path().join("phantom_000.mhd");
    let mask = run.path().join("mask.mhd");
    let prob = run.path().join("prob.mhd");
    let o = gcanet(&[
        "infer",
        "--checkpoint",
        path(&ckpt),
        "--in",
        path(&input),
        "--out",
        path(&mask),
        "--prob-out",
        path(&prob),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (m, ty) = read_metaimage_typed(&mask).unwrap();
    assert_eq!(ty, ElementType::Uchar);
    let src = read_metaimage(&input).unwrap();
    assert_eq!(m.extents(), src.extents());
    assert_eq!(m.spacing, src.spacing);
    assert!(m.values().iter().all(|&v| v == 0.0 || v == 1.0));
    let p = read_metaimage(&prob).unwrap();
    assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));

    let gt = data.path().join("phantom_000_segmentation.mhd");
    let o = gcanet(&["eval", "--pred", path(&mask), "--gt", path(&gt)]);
    assert!(
        matches!(o.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let o = gcanet(&["inspect", "--checkpoint", path(&ckpt)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("at step 2"));
}
