//! Training state, the per-step update and conversion to and from
//! checkpoints.

use std::path::Path;

use odcs_core::data::{
    augment, crop_roi, detect_roi, image_to_tensor, mask_to_target, netpbm, BrightGreenDetector, DatasetManifest,
    FundusImage, SegmentationMask,
};
use odcs_core::losses::total_loss;
use odcs_core::nn::{FeatureExtractor, Generator, ParamSet};
use odcs_core::optim::{zero_grad, Adam};
use odcs_core::{Graph, Mode, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, NamedTensor, OptimizerState, RngState};
use crate::config::TrainConfig;
use crate::error::{CliError, Result};

/// One manifest record cropped to its region of interest and resized to the
/// network input size.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: FundusImage,
    pub mask: SegmentationMask,
}

/// Reads every record of the manifest at `path`. Records without a region of
/// interest go through the bright-region detector.
pub fn load_samples(path: &Path, size: usize) -> Result<Vec<Sample>> {
    let manifest = DatasetManifest::load(path).map_err(CliError::at(path))?;
    let detector = BrightGreenDetector::default();
    manifest
        .records
        .iter()
        .map(|rec| {
            let image = netpbm::read_ppm(&rec.image).map_err(CliError::at(&rec.image))?;
            let (mask, _) = netpbm::read_mask(&rec.mask).map_err(CliError::at(&rec.mask))?;
            if (mask.width, mask.height) != (image.width, image.height) {
                return Err(CliError::Usage(format!(
                    "{}: mask is {}x{}, image is {}x{}",
                    rec.mask.display(),
                    mask.width,
                    mask.height,
                    image.width,
                    image.height
                )));
            }
            let roi = rec.roi.unwrap_or_else(|| detect_roi(&image, &detector));
            let (image, mask) = crop_roi(&image, Some(&mask), roi, size).map_err(CliError::at(&rec.image))?;
            let id = rec
                .image
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok(Sample {
                id,
                image,
                mask: mask.expect("mask was cropped"),
            })
        })
        .collect()
}

/// Loss values of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub dice: f32,
    pub mfm: f32,
    pub total: f32,
}

impl StepLosses {
    pub const HEADER: &'static str = "step,l_dice,l_mfm,l_total";

    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.step, self.dice, self.mfm, self.total)
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub extractor: FeatureExtractor,
    generator_opt: Adam,
    extractor_opt: Option<Adam>,
    rng: ChaCha8Rng,
    pub epoch: u64,
    pub step: u64,
}

const GENERATOR: &str = "gen";
const EXTRACTOR: &str = "fx";

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator_config())?;
        let mut extractor = FeatureExtractor::new(config.extractor_config())?;
        extractor.params_mut().set_trainable(config.extractor_trainable);
        let generator_opt = Adam::new(config.adam_config(), generator.params());
        let extractor_opt = config
            .extractor_trainable
            .then(|| Adam::new(config.adam_config(), extractor.params()));
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            config,
            generator,
            extractor,
            generator_opt,
            extractor_opt,
            rng,
            epoch: 0,
            step: 0,
        })
    }

    fn batch_tensors(&self, samples: &[&Sample]) -> Result<(Tensor, Tensor)> {
        let images: Vec<Tensor> = samples.iter().map(|s| image_to_tensor(&s.image)).collect();
        let targets: Vec<Tensor> = samples.iter().map(|s| mask_to_target(&s.mask)).collect();
        Ok((Tensor::stack(&images)?, Tensor::stack(&targets)?))
    }

    /// Splits a shuffled index list into batches, folding a trailing single
    /// sample into the previous batch.
    fn batches(&self, order: &[usize]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
            let tail = out.pop().expect("non-empty");
            out.last_mut().expect("non-empty").extend(tail);
        }
        out
    }

    /// Sets the extractor's batch-norm statistics from the training pairs.
    pub fn calibrate_extractor(&mut self, samples: &[Sample]) -> Result<()> {
        let refs: Vec<&Sample> = samples.iter().collect();
        let order: Vec<usize> = (0..samples.len()).collect();
        let pairs = self
            .batches(&order)
            .iter()
            .map(|b| self.batch_tensors(&b.iter().map(|&i| refs[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        self.extractor.calibrate(pairs.iter().map(|(x, y)| (x, y)))?;
        Ok(())
    }

    /// Sets the generator's batch-norm running statistics from train-mode
    /// passes over `samples` in the fixed training partition.
    pub fn refresh_statistics(&mut self, samples: &[Sample]) -> Result<()> {
        let refs: Vec<&Sample> = samples.iter().collect();
        let order: Vec<usize> = (0..samples.len()).collect();
        let inputs = self
            .batches(&order)
            .iter()
            .map(|b| Ok(self.batch_tensors(&b.iter().map(|&i| refs[i]).collect::<Vec<_>>())?.0))
            .collect::<Result<Vec<_>>>()?;
        self.generator.calibrate(&inputs)?;
        Ok(())
    }

    /// One pass over `samples` in a freshly shuffled order. `log` receives
    /// the losses of every step as soon as it completes.
    pub fn train_epoch(&mut self, samples: &[Sample], mut log: impl FnMut(&StepLosses) -> Result<()>) -> Result<()> {
        if samples.len() < 2 {
            return Err(CliError::Usage(format!(
                "training needs at least 2 images, manifest has {}",
                samples.len()
            )));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let augment_cfg = self.config.augment_config();
        for batch in self.batches(&order) {
            let augmented: Vec<Sample> = batch
                .iter()
                .map(|&i| {
                    let seed: u64 = self.rng.random();
                    let s = &samples[i];
                    let (image, mask) = augment(&s.image, &s.mask, &augment_cfg, seed);
                    Sample {
                        id: s.id.clone(),
                        image,
                        mask,
                    }
                })
                .collect();
            let refs: Vec<&Sample> = augmented.iter().collect();
            let (x, y) = self.batch_tensors(&refs)?;
            let losses = self.step(x, y).map_err(|e| match e {
                CliError::Core(odcs_core::Error::NonFinite { .. }) => CliError::Diverged { step: self.step + 1 },
                other => other,
            })?;
            log(&losses)?;
        }
        self.epoch += 1;
        Ok(())
    }

    fn step(&mut self, x: Tensor, y: Tensor) -> Result<StepLosses> {
        let mut g = Graph::new();
        let gen_vars = self.generator.params().bind(&mut g);
        let x = g.constant(x);
        let y = g.constant(y);
        let yhat = self.generator.forward(&mut g, &gen_vars, x, Mode::Train)?;
        let loss_cfg = self.config.loss_config();
        if self.extractor_opt.is_some() {
            zero_grad(self.extractor.params_mut());
        }
        let mut bound = self.extractor.bind(&mut g, Mode::Eval);
        let terms = total_loss(&mut g, x, y, yhat, &mut bound, &loss_cfg)?;
        let value = |v| g.value(v).item().expect("scalar loss");
        let losses = StepLosses {
            step: self.step + 1,
            dice: value(terms.dice),
            mfm: value(terms.mfm),
            total: value(terms.total),
        };
        if ![losses.dice, losses.mfm, losses.total].iter().all(|v| v.is_finite()) {
            return Err(CliError::Diverged { step: losses.step });
        }
        g.backward(terms.total)?;
        if self.extractor_opt.is_some() {
            bound.collect_grads(&g);
        }
        drop(bound);
        if let Some(opt) = self.extractor_opt.as_mut() {
            opt.step(self.extractor.params_mut())?;
        }
        let params = self.generator.params_mut();
        zero_grad(params);
        params.collect_grads(&g, &gen_vars);
        self.generator_opt.step(params)?;
        self.step += 1;
        Ok(losses)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for (prefix, params, buffers) in [
            (GENERATOR, self.generator.params(), self.generator.buffers()),
            (EXTRACTOR, self.extractor.params(), self.extractor.buffers()),
        ] {
            for p in params.iter() {
                tensors.push(NamedTensor {
                    name: format!("{prefix}.{}", p.name),
                    dims: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                });
            }
            for (name, state) in buffers.iter() {
                for (stat, values) in [
                    ("running_mean", &state.running_mean),
                    ("running_var", &state.running_var),
                ] {
                    tensors.push(NamedTensor {
                        name: format!("{prefix}.{name}.{stat}"),
                        dims: vec![values.len()],
                        data: values.clone(),
                    });
                }
            }
        }
        let mut optimizers = vec![optimizer_state(GENERATOR, &self.generator_opt)];
        if let Some(opt) = &self.extractor_opt {
            optimizers.push(optimizer_state(EXTRACTOR, opt));
        }
        Checkpoint {
            config_text: self.config.to_text(),
            epoch: self.epoch,
            step: self.step,
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            },
            tensors,
            optimizers,
        }
    }

    /// Restores the full training state saved by [`Trainer::to_checkpoint`].
    /// `config` must equal the checkpoint's snapshot except for `epochs`.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let saved = TrainConfig::parse(&ckpt.config_text)?;
        if (TrainConfig {
            epochs: config.epochs,
            ..saved
        }) != config
        {
            return Err(CliError::Usage(
                "config differs from the checkpoint's snapshot in more than 'epochs'".into(),
            ));
        }
        let mut t = Trainer::new(config)?;
        restore_network(ckpt, GENERATOR, t.generator.params_mut())?;
        restore_buffers(ckpt, GENERATOR, t.generator.buffers_mut())?;
        restore_network(ckpt, EXTRACTOR, t.extractor.params_mut())?;
        restore_buffers(ckpt, EXTRACTOR, t.extractor.buffers_mut())?;
        t.generator_opt = restore_optimizer(ckpt, GENERATOR, &t.generator_opt)?;
        if let Some(opt) = &t.extractor_opt {
            t.extractor_opt = Some(restore_optimizer(ckpt, EXTRACTOR, opt)?);
        }
        let mut rng = ChaCha8Rng::from_seed(ckpt.rng.seed);
        rng.set_stream(ckpt.rng.stream);
        rng.set_word_pos(ckpt.rng.word_pos);
        t.rng = rng;
        t.epoch = ckpt.epoch;
        t.step = ckpt.step;
        Ok(t)
    }
}

/// Rebuilds the generator stored in a checkpoint, with its own config.
pub fn load_generator(ckpt: &Checkpoint) -> Result<(TrainConfig, Generator)> {
    let config = TrainConfig::parse(&ckpt.config_text)?;
    let mut generator = Generator::new(config.generator_config())?;
    restore_network(ckpt, GENERATOR, generator.params_mut())?;
    restore_buffers(ckpt, GENERATOR, generator.buffers_mut())?;
    Ok((config, generator))
}

fn optimizer_state(name: &str, opt: &Adam) -> OptimizerState {
    OptimizerState {
        name: name.into(),
        step: opt.step_count(),
        m: opt.first_moments().to_vec(),
        v: opt.second_moments().to_vec(),
    }
}

fn missing(name: &str) -> CliError {
    CliError::Checkpoint(format!("checkpoint lacks '{name}'"))
}

fn restore_network(ckpt: &Checkpoint, prefix: &str, params: &mut ParamSet) -> Result<()> {
    for p in params.iter_mut() {
        let name = format!("{prefix}.{}", p.name);
        let saved = ckpt.tensor(&name).ok_or_else(|| missing(&name))?;
        if saved.dims != p.value.shape() {
            return Err(CliError::Checkpoint(format!(
                "'{name}' has shape {:?}, network expects {:?}",
                saved.dims,
                p.value.shape()
            )));
        }
        p.value.data_mut().copy_from_slice(&saved.data);
    }
    Ok(())
}

fn restore_buffers(ckpt: &Checkpoint, prefix: &str, buffers: &mut odcs_core::nn::BufferSet) -> Result<()> {
    let names: Vec<String> = buffers.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let state = buffers.get_mut(&name).expect("listed above");
        for (stat, values) in [
            ("running_mean", &mut state.running_mean),
            ("running_var", &mut state.running_var),
        ] {
            let key = format!("{prefix}.{name}.{stat}");
            let saved = ckpt.tensor(&key).ok_or_else(|| missing(&key))?;
            if saved.data.len() != values.len() {
                return Err(CliError::Checkpoint(format!("'{key}' has the wrong length")));
            }
            values.copy_from_slice(&saved.data);
        }
    }
    Ok(())
}

fn restore_optimizer(ckpt: &Checkpoint, name: &str, fresh: &Adam) -> Result<Adam> {
    let saved = ckpt.optimizer(name).ok_or_else(|| missing(name))?;
    let shapes_match = saved.m.len() == fresh.first_moments().len()
        && saved
            .m
            .iter()
            .zip(fresh.first_moments())
            .all(|(a, b)| a.len() == b.len());
    if !shapes_match {
        return Err(CliError::Checkpoint(format!(
            "optimizer '{name}' does not match the network"
        )));
    }
    Ok(Adam::from_parts(
        fresh.config,
        saved.step,
        saved.m.clone(),
        saved.v.clone(),
    )?)
}
