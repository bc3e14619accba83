//! Training configuration as plain `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after a value
//! starts a comment. Unknown or repeated keys are errors. Paths are kept as
//! written and resolved against the config file's directory by the caller.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use odcs_core::data::AugmentConfig;
use odcs_core::losses::{LossConfig, DEFAULT_SMOOTH};
use odcs_core::nn::{ExtractorConfig, GeneratorConfig};
use odcs_core::optim::AdamConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub lambda: f64,
    pub smooth: f64,
    /// Multiplies every channel width of both networks.
    pub width_scale: f64,
    pub input_size: usize,
    pub seed: u64,
    pub augment: bool,
    pub hflip: bool,
    pub vflip: bool,
    pub scale_range: Option<(f64, f64)>,
    pub gain_range: Option<(f64, f64)>,
    pub extractor_trainable: bool,
    /// Re-estimate the extractor's batch-norm statistics on the training set
    /// before the first step.
    pub calibrate_extractor: bool,
    /// Re-estimate the generator's batch-norm running statistics on the
    /// un-augmented training set before every checkpoint. Train-mode steps
    /// never read them, so losses are unaffected.
    pub refresh_statistics: bool,
    pub checkpoint_every: u64,
    pub checkpoint_dir: PathBuf,
    pub train_manifest: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 8,
            epochs: 10,
            lambda: 150.0,
            smooth: DEFAULT_SMOOTH,
            width_scale: 1.0,
            input_size: 256,
            seed: 0,
            augment: true,
            hflip: true,
            vflip: true,
            scale_range: Some((0.9, 1.1)),
            gain_range: Some((0.8, 1.2)),
            extractor_trainable: false,
            calibrate_extractor: true,
            refresh_statistics: true,
            checkpoint_every: 1,
            checkpoint_dir: PathBuf::from("checkpoints"),
            train_manifest: PathBuf::from("train.csv"),
        }
    }
}

const KEYS: &[&str] = &[
    "lr",
    "beta1",
    "beta2",
    "batch_size",
    "epochs",
    "lambda",
    "smooth",
    "width_scale",
    "input_size",
    "seed",
    "augment",
    "hflip",
    "vflip",
    "scale_range",
    "gain_range",
    "extractor_trainable",
    "calibrate_extractor",
    "refresh_statistics",
    "checkpoint_every",
    "checkpoint_dir",
    "train_manifest",
];

fn bad(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config { line, msg: msg.into() }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(line, format!("{key}: cannot parse '{value}'")))
}

fn flag(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(line, format!("{key}: expected true or false, got '{value}'"))),
    }
}

/// Accepts a decimal or a fraction such as `1/8`.
fn ratio(line: usize, key: &str, value: &str) -> Result<f64> {
    match value.split_once('/') {
        Some((n, d)) => {
            let n: f64 = number(line, key, n.trim())?;
            let d: f64 = number(line, key, d.trim())?;
            if d == 0.0 {
                return Err(bad(line, format!("{key}: zero denominator")));
            }
            Ok(n / d)
        }
        None => number(line, key, value),
    }
}

fn range(line: usize, key: &str, value: &str) -> Result<Option<(f64, f64)>> {
    if value == "none" {
        return Ok(None);
    }
    let (lo, hi) = value
        .split_once(',')
        .ok_or_else(|| bad(line, format!("{key}: expected 'lo,hi' or 'none'")))?;
    Ok(Some((number(line, key, lo.trim())?, number(line, key, hi.trim())?)))
}

fn show_range(r: Option<(f64, f64)>) -> String {
    match r {
        Some((lo, hi)) => format!("{lo:?},{hi:?}"),
        None => "none".into(),
    }
}

impl TrainConfig {
    /// Parses config text over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(line, format!("unknown key '{key}'")));
            }
            if !seen.insert(key.to_string()) {
                return Err(bad(line, format!("duplicate key '{key}'")));
            }
            match key {
                "lr" => cfg.lr = number(line, key, value)?,
                "beta1" => cfg.beta1 = number(line, key, value)?,
                "beta2" => cfg.beta2 = number(line, key, value)?,
                "batch_size" => cfg.batch_size = number(line, key, value)?,
                "epochs" => cfg.epochs = number(line, key, value)?,
                "lambda" => cfg.lambda = number(line, key, value)?,
                "smooth" => cfg.smooth = number(line, key, value)?,
                "width_scale" => cfg.width_scale = ratio(line, key, value)?,
                "input_size" => cfg.input_size = number(line, key, value)?,
                "seed" => cfg.seed = number(line, key, value)?,
                "augment" => cfg.augment = flag(line, key, value)?,
                "hflip" => cfg.hflip = flag(line, key, value)?,
                "vflip" => cfg.vflip = flag(line, key, value)?,
                "scale_range" => cfg.scale_range = range(line, key, value)?,
                "gain_range" => cfg.gain_range = range(line, key, value)?,
                "extractor_trainable" => cfg.extractor_trainable = flag(line, key, value)?,
                "calibrate_extractor" => cfg.calibrate_extractor = flag(line, key, value)?,
                "refresh_statistics" => cfg.refresh_statistics = flag(line, key, value)?,
                "checkpoint_every" => cfg.checkpoint_every = number(line, key, value)?,
                "checkpoint_dir" => cfg.checkpoint_dir = PathBuf::from(value),
                "train_manifest" => cfg.train_manifest = PathBuf::from(value),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key in canonical order; `parse(to_text())` is lossless.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr", format!("{:?}", self.lr));
        put("beta1", format!("{:?}", self.beta1));
        put("beta2", format!("{:?}", self.beta2));
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("lambda", format!("{:?}", self.lambda));
        put("smooth", format!("{:?}", self.smooth));
        put("width_scale", format!("{:?}", self.width_scale));
        put("input_size", self.input_size.to_string());
        put("seed", self.seed.to_string());
        put("augment", self.augment.to_string());
        put("hflip", self.hflip.to_string());
        put("vflip", self.vflip.to_string());
        put("scale_range", show_range(self.scale_range));
        put("gain_range", show_range(self.gain_range));
        put("extractor_trainable", self.extractor_trainable.to_string());
        put("calibrate_extractor", self.calibrate_extractor.to_string());
        put("refresh_statistics", self.refresh_statistics.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("checkpoint_dir", self.checkpoint_dir.display().to_string());
        put("train_manifest", self.train_manifest.display().to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(bad(0, msg));
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return fail(format!("lr {} outside (0, 1]", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} {b} outside [0, 1)"));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return fail("batch_size, epochs and checkpoint_every must be at least 1".into());
        }
        if let Some((lo, hi)) = self.scale_range {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail(format!("scale_range {lo},{hi} must satisfy 0 < lo <= hi"));
            }
        }
        if let Some((lo, hi)) = self.gain_range {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return fail(format!("gain_range {lo},{hi} must satisfy 0 <= lo <= hi"));
            }
        }
        for path in [&self.checkpoint_dir, &self.train_manifest] {
            if path.as_os_str().is_empty() || path.to_str().is_none_or(|p| p.contains(['\n', '#'])) {
                return fail(format!("path '{}' is empty or not representable", path.display()));
            }
        }
        self.loss_config().validate().map_err(|e| bad(0, e.to_string()))?;
        self.generator_config().layout().map_err(|e| bad(0, e.to_string()))?;
        let extractor = self.extractor_config();
        extractor.validate().map_err(|e| bad(0, e.to_string()))?;
        let sizes = extractor
            .output_sizes(self.input_size)
            .map_err(|e| bad(0, format!("input_size {}: {e}", self.input_size)))?;
        if sizes.contains(&0) {
            return fail(format!(
                "input_size {} too small for the feature extractor",
                self.input_size
            ));
        }
        Ok(())
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            smooth: self.smooth,
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            width_scale: self.width_scale,
            input_size: self.input_size,
            init_seed: self.seed,
            ..GeneratorConfig::default()
        }
    }

    pub fn extractor_config(&self) -> ExtractorConfig {
        ExtractorConfig {
            width_scale: self.width_scale,
            init_seed: self.seed.wrapping_add(1),
            ..ExtractorConfig::default()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        if !self.augment {
            return AugmentConfig::none();
        }
        AugmentConfig {
            hflip: self.hflip,
            vflip: self.vflip,
            scale: self.scale_range,
            illumination: self.gain_range,
        }
    }

    /// Copy with relative paths joined onto `base`.
    pub fn resolved(&self, base: &Path) -> TrainConfig {
        TrainConfig {
            checkpoint_dir: base.join(&self.checkpoint_dir),
            train_manifest: base.join(&self.train_manifest),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2), (0.0002, 0.5, 0.999));
        assert_eq!((c.batch_size, c.epochs, c.lambda), (8, 10, 150.0));
        assert_eq!((c.width_scale, c.input_size), (1.0, 256));
        assert!(!c.extractor_trainable);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let c = TrainConfig {
            lr: 1e-3,
            width_scale: 0.125,
            input_size: 64,
            seed: 17,
            scale_range: None,
            gain_range: Some((0.75, 1.3)),
            checkpoint_dir: PathBuf::from("runs/a"),
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap().to_text(), c.to_text());
    }

    #[test]
    fn comments_fractions_and_errors() {
        let c = TrainConfig::parse("# run\nwidth_scale = 1/8 # small\n\ninput_size=64\n").unwrap();
        assert_eq!((c.width_scale, c.input_size), (0.125, 64));

        let line_of = |text: &str| match TrainConfig::parse(text) {
            Err(CliError::Config { line, .. }) => line,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(line_of("lr = 1\nlearning_rate = 0.1\n"), 2);
        assert_eq!(line_of("epochs = 3\nepochs = 4\n"), 2);
        assert_eq!(line_of("augment = yes\n"), 1);
        assert_eq!(line_of("width_scale = 1/0\n"), 1);
        assert_eq!(line_of("batch_size\n"), 1);
        assert_eq!(line_of("beta1 = 1.0\n"), 0);
        assert_eq!(line_of("input_size = 8\n"), 0);
        assert_eq!(line_of("scale_range = 1.2,0.9\n"), 0);
    }
}
