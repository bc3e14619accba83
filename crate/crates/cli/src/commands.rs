use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use odcs_core::data::{
    crop_roi, detect_roi, image_to_tensor, netpbm, resize_mask_nearest, synth_sample, target_to_mask,
    BrightGreenDetector, Class, DatasetManifest, FundusImage, ManifestRecord, RoiBox, SegmentationMask,
};
use odcs_core::metrics::{evaluate, EvalReport};
use odcs_core::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::error::{CliError, Result};
use crate::train::{load_generator, load_samples, StepLosses, Trainer};

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const LOSS_LOG_NAME: &str = "loss_log.csv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

pub fn epoch_checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Writes `count` synthetic image/mask pairs and a manifest listing them
/// with their regions of interest. Returns the manifest path.
pub fn cmd_synth(out: &Path, count: usize, size: usize, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = DatasetManifest::default();
    for i in 0..count {
        let sample = synth_sample(rng.random(), size)?;
        if !sample.mask.cup_within_disc() {
            return Err(CliError::Core(odcs_core::Error::Contract(format!(
                "synthetic mask {i} has cup outside disc"
            ))));
        }
        let image = out.join(format!("synth_{i:04}.ppm"));
        let mask = out.join(format!("synth_{i:04}_mask.pgm"));
        netpbm::write_ppm(&sample.image, &image).map_err(CliError::at(&image))?;
        netpbm::write_mask(&sample.mask, &mask).map_err(CliError::at(&mask))?;
        manifest.records.push(ManifestRecord {
            image,
            mask,
            roi: Some(sample.roi),
        });
    }
    let path = out.join(MANIFEST_NAME);
    fs::write(&path, manifest.to_text(out)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub epochs: u64,
    pub steps: u64,
    pub last: Option<StepLosses>,
    pub checkpoint: PathBuf,
}

/// Keeps the header and every row up to and including `step`.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let mut kept = vec![StepLosses::HEADER.to_string()];
    if let Ok(file) = File::open(path) {
        for line in BufReader::new(file).lines().skip(1) {
            let line = line.map_err(|e| CliError::io(path, e))?;
            let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
            match row_step {
                Some(s) if s <= step => kept.push(line),
                _ => break,
            }
        }
    }
    let mut text = kept.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Trains from the config at `config_path`, or continues from `resume`.
/// Relative paths in the config are taken from the config file's directory.
pub fn cmd_train(config_path: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    let config = TrainConfig::load(config_path).map_err(|e| match e {
        CliError::Config { line, msg } => CliError::Config {
            line,
            msg: format!("{}: {msg}", config_path.display()),
        },
        other => other,
    })?;
    let base = config_path.parent().unwrap_or(Path::new(""));
    let paths = config.resolved(base);
    let samples = load_samples(&paths.train_manifest, config.input_size)?;
    if samples.len() < 2 {
        return Err(CliError::Usage(format!(
            "{}: training needs at least 2 images, found {}",
            paths.train_manifest.display(),
            samples.len()
        )));
    }
    let dir = &paths.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let log_path = dir.join(LOSS_LOG_NAME);

    let mut trainer = match resume {
        Some(ckpt_path) => {
            let ckpt = Checkpoint::load(ckpt_path)?;
            let trainer = Trainer::from_checkpoint(&ckpt, config.clone())?;
            truncate_log(&log_path, trainer.step)?;
            trainer
        }
        None => {
            let mut trainer = Trainer::new(config.clone())?;
            if config.calibrate_extractor {
                trainer.calibrate_extractor(&samples)?;
            }
            truncate_log(&log_path, 0)?;
            trainer
        }
    };

    let file = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut last = None;
    let last_path = dir.join(LAST_CHECKPOINT);
    while trainer.epoch < config.epochs {
        trainer.train_epoch(&samples, |losses| {
            last = Some(*losses);
            writeln!(log, "{}", losses.csv_line()).map_err(|e| CliError::io(&log_path, e))
        })?;
        log.flush().map_err(|e| CliError::io(&log_path, e))?;
        if config.refresh_statistics {
            trainer.refresh_statistics(&samples)?;
        }
        let ckpt = trainer.to_checkpoint();
        ckpt.save(&last_path)?;
        if trainer.epoch % config.checkpoint_every == 0 {
            ckpt.save(&dir.join(epoch_checkpoint_name(trainer.epoch)))?;
        }
    }
    Ok(TrainSummary {
        epochs: trainer.epoch,
        steps: trainer.step,
        last,
        checkpoint: last_path,
    })
}

/// Runs the checkpoint's generator in eval mode on every record of
/// `manifest` and scores it inside each record's region of interest at the
/// network resolution. Writes per-image rows to `csv` when given.
pub fn cmd_eval(ckpt_path: &Path, manifest: &Path, csv: Option<&Path>) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (config, mut generator) = load_generator(&ckpt)?;
    let samples = load_samples(manifest, config.input_size)?;
    if samples.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: manifest has no records",
            manifest.display()
        )));
    }
    let s = config.input_size;
    let mut preds = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    for sample in samples {
        let x = image_to_tensor(&sample.image).reshape(vec![1, 3, s, s])?;
        let y = generator.predict(x, Mode::Eval)?;
        preds.push((sample.id.clone(), target_to_mask(y.data(), s, s)));
        truths.push((sample.id, sample.mask));
    }
    let report = evaluate(&preds, &truths)?;
    if let Some(path) = csv {
        fs::write(path, report.to_csv()).map_err(|e| CliError::io(path, e))?;
    }
    Ok(report)
}

/// Segments one image: crops `roi` (or the detected region), predicts at the
/// network size and maps the result back to source resolution with
/// nearest-neighbour sampling. Pixels outside the region are background.
pub fn predict_mask(ckpt: &Checkpoint, image: &FundusImage, roi: Option<RoiBox>) -> Result<SegmentationMask> {
    let (config, mut generator) = load_generator(ckpt)?;
    let roi = roi.unwrap_or_else(|| detect_roi(image, &BrightGreenDetector::default()));
    roi.validate(image.width, image.height)?;
    let s = config.input_size;
    let (crop, _) = crop_roi(image, None, roi, s)?;
    let y = generator.predict(image_to_tensor(&crop).reshape(vec![1, 3, s, s])?, Mode::Eval)?;
    let local = resize_mask_nearest(&target_to_mask(y.data(), s, s), roi.w, roi.h);
    let mut full = SegmentationMask::filled(image.width, image.height, Class::Background);
    for y in 0..roi.h {
        for x in 0..roi.w {
            full.set(roi.x + x, roi.y + y, local.get(x, y));
        }
    }
    Ok(full)
}

/// Tints disc pixels green and cup pixels blue at half strength.
pub fn overlay(image: &FundusImage, mask: &SegmentationMask) -> FundusImage {
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            let tint = match mask.get(x, y) {
                Class::Cup => [0u16, 0, 255],
                Class::Disc => [0, 255, 0],
                Class::Background => continue,
            };
            let p = image.get(x, y);
            out.set(x, y, std::array::from_fn(|c| ((p[c] as u16 + tint[c]) / 2) as u8));
        }
    }
    out
}

pub fn cmd_predict(
    ckpt_path: &Path,
    image_path: &Path,
    roi: Option<RoiBox>,
    out: &Path,
    overlay_out: Option<&Path>,
) -> Result<SegmentationMask> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let image = netpbm::read_ppm(image_path).map_err(CliError::at(image_path))?;
    let mask = predict_mask(&ckpt, &image, roi).map_err(|e| match e {
        CliError::Core(source) => CliError::File {
            path: image_path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    netpbm::write_mask(&mask, out).map_err(CliError::at(out))?;
    if let Some(path) = overlay_out {
        netpbm::write_ppm(&overlay(&image, &mask), path).map_err(CliError::at(path))?;
    }
    Ok(mask)
}
