use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use odcs::checkpoint::Checkpoint;
use odcs::commands::{LAST_CHECKPOINT, LOSS_LOG_NAME};
use odcs::{cmd_train, CliError};
use odcs_core::data::netpbm::{self, Raster};
use odcs_core::data::{DatasetManifest, FundusImage};

fn odcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odcs"))
        .args(args)
        .env_remove("ODCS_THREADS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected one error line, got {text:?}");
    text.trim_end().to_string()
}

fn synth(dir: &Path, count: usize, size: usize, seed: u64) {
    let out = odcs(&[
        "synth",
        "--out",
        path(dir),
        "--count",
        &count.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Trains a tiny model on fresh synthetic data and returns its checkpoint.
fn trained(root: &Path) -> PathBuf {
    synth(&root.join("data"), 3, 64, 5);
    let cfg = root.join("tiny.cfg");
    fs::write(
        &cfg,
        "width_scale = 1/8\ninput_size = 32\nbatch_size = 3\nepochs = 2\nlr = 0.005\n\
         train_manifest = data/manifest.csv\ncheckpoint_dir = ckpt\n",
    )
    .unwrap();
    let out = odcs(&["train", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    root.join("ckpt").join(LAST_CHECKPOINT)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_writes_pairs_and_manifest_deterministically() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    synth(&a, 4, 64, 7);
    synth(&b, 4, 64, 7);
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));
    assert_eq!(files.iter().filter(|(n, _)| n.ends_with(".ppm")).count(), 4);
    assert_eq!(files.iter().filter(|(n, _)| n.ends_with(".pgm")).count(), 4);

    let manifest = DatasetManifest::load(&a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.len(), 4);
    for rec in &manifest.records {
        assert!(matches!(netpbm::read_raster(&rec.image).unwrap(), Raster::Color(_)));
        let (mask, snapped) = netpbm::read_mask(&rec.mask).unwrap();
        assert_eq!(snapped, 0);
        assert!(mask.cup_within_disc());
        assert!(rec.roi.is_some());
    }
}

#[test]
fn config_errors_are_one_line_and_precede_any_work() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.cfg");
    fs::write(&cfg, "checkpoint_dir = ckpt\nlearning_rate = 0.1\n").unwrap();
    let out = odcs(&["train", "--config", path(&cfg)]);
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=config msg="), "{line}");
    assert!(line.contains("line 2") && line.contains("learning_rate"), "{line}");
    assert!(!root.path().join("ckpt").exists());

    let out = odcs(&["train", "--config", path(&root.path().join("missing.cfg"))]);
    assert!(stderr_line(&out).starts_with("error kind=io"));
    let out = odcs(&["synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error kind=usage"));
}

#[test]
fn eval_rejects_an_empty_manifest_and_reports_rows() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained(root.path());
    let empty = root.path().join("empty.csv");
    fs::write(&empty, "# nothing here\n").unwrap();
    let out = odcs(&["eval", "--ckpt", path(&ckpt), "--manifest", path(&empty)]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("no records"));

    let csv = root.path().join("rows.csv");
    let manifest = root.path().join("data").join("manifest.csv");
    let out = odcs(&[
        "eval",
        "--ckpt",
        path(&ckpt),
        "--manifest",
        path(&manifest),
        "--csv",
        path(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("images=3"), "{stdout}");
    let rows = fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 4);
    assert!(rows.starts_with("id,dice_cup,dice_disc,cdr_pred,cdr_true"));
}

#[test]
fn predict_outputs_codes_deterministically_and_honours_roi() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained(root.path());
    let image_path = root.path().join("data").join("synth_0000.ppm");
    let run = |image: &Path, out: &str, extra: &[&str]| {
        let out = root.path().join(out);
        let mut args = vec![
            "predict",
            "--ckpt",
            path(&ckpt),
            "--image",
            path(image),
            "--out",
            path(&out),
        ];
        args.extend_from_slice(extra);
        let res = odcs(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        fs::read(out).unwrap()
    };
    let overlay = root.path().join("overlay.ppm");
    let first = run(&image_path, "a.pgm", &["--overlay", path(&overlay)]);
    assert_eq!(run(&image_path, "b.pgm", &[]), first);
    match netpbm::decode(&first).unwrap() {
        Raster::Gray(g) => {
            assert_eq!((g.width, g.height), (64, 64));
            assert!(g.pixels.iter().all(|v| [0, 128, 255].contains(v)));
        }
        other => panic!("mask must be P5, got {other:?}"),
    }
    assert!(matches!(netpbm::read_raster(&overlay).unwrap(), Raster::Color(_)));

    // A bright blob outside the box moves the detector but not an explicit ROI.
    let roi = "10,12,30,30";
    let with_roi = run(&image_path, "c.pgm", &["--roi", roi]);
    let mut image: FundusImage = netpbm::read_ppm(&image_path).unwrap();
    for y in 50..64 {
        for x in 48..64 {
            image.set(x, y, [255, 255, 255]);
        }
    }
    let distracted = root.path().join("distracted.ppm");
    netpbm::write_ppm(&image, &distracted).unwrap();
    assert_eq!(run(&distracted, "d.pgm", &["--roi", roi]), with_roi);
    assert_ne!(run(&distracted, "e.pgm", &[]), run(&image_path, "f.pgm", &[]));

    let out = odcs(&[
        "predict",
        "--ckpt",
        path(&ckpt),
        "--image",
        path(&image_path),
        "--roi",
        "1,2,3",
        "--out",
        "x",
    ]);
    assert!(stderr_line(&out).starts_with("error kind=parse"));
}

#[test]
fn checkpoint_version_gates_loading() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained(root.path());
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
    let future = root.path().join("future.ckpt");
    fs::write(&future, bytes).unwrap();
    let manifest = root.path().join("data").join("manifest.csv");
    let out = odcs(&["eval", "--ckpt", path(&future), "--manifest", path(&manifest)]);
    assert!(stderr_line(&out).starts_with("error kind=version"));
    let out = odcs(&["eval", "--ckpt", path(&manifest), "--manifest", path(&manifest)]);
    assert!(stderr_line(&out).starts_with("error kind=checkpoint"));
}

#[test]
fn non_finite_weights_abort_and_keep_the_last_good_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let good = trained(root.path());
    let before = fs::read(&good).unwrap();
    let log_before = fs::read_to_string(root.path().join("ckpt").join(LOSS_LOG_NAME)).unwrap();

    let mut poisoned = Checkpoint::decode(&before).unwrap();
    let weight = poisoned
        .tensors
        .iter_mut()
        .find(|t| t.name == "gen.enc1.weight")
        .unwrap();
    weight.data[0] = f32::NAN;
    let poisoned_path = root.path().join("poisoned.ckpt");
    poisoned.save(&poisoned_path).unwrap();

    let cfg = root.path().join("tiny.cfg");
    let text = fs::read_to_string(&cfg).unwrap().replace("epochs = 2", "epochs = 3");
    fs::write(&cfg, text).unwrap();
    match cmd_train(&cfg, Some(&poisoned_path)) {
        Err(CliError::Diverged { step: 3 }) => {}
        other => panic!("expected divergence at step 3, got {other:?}"),
    }
    assert_eq!(fs::read(&good).unwrap(), before);
    let log_after = fs::read_to_string(root.path().join("ckpt").join(LOSS_LOG_NAME)).unwrap();
    assert_eq!(log_after, log_before);
}

#[test]
fn resume_rejects_a_changed_config() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained(root.path());
    let cfg = root.path().join("tiny.cfg");
    let text = fs::read_to_string(&cfg).unwrap().replace("lr = 0.005", "lr = 0.004");
    fs::write(&cfg, text).unwrap();
    let out = odcs(&["train", "--config", path(&cfg), "--resume", path(&ckpt)]);
    assert!(stderr_line(&out).starts_with("error kind=usage"));
}
