//! Parameter containers and the two networks: the U-shaped generator and the
//! conditioned feature extractor.

mod extractor;
mod generator;

pub use extractor::{BoundExtractor, ExtractorConfig, FeatureExtractor, FeaturePyramid, PyramidExtractor};
pub use generator::{BlockShape, Generator, GeneratorConfig, GeneratorLayout};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{BnState, Graph, Var};
use crate::tensor::Tensor;

/// Standard deviation of the normal initializer for (transposed) conv weights.
pub const INIT_STD: f64 = 0.02;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Ordered parameter list; order is the binding, checkpoint and optimizer order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.params.push(Param {
            name: name.into(),
            value: value.with_requires_grad(true),
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Param {
        &mut self.params[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.value.set_requires_grad(trainable);
        }
    }

    /// Records every parameter as a leaf on `g`, in order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.tensor(p.value.clone())).collect()
    }

    /// Adds the gradients of the last backward pass into each parameter's
    /// gradient buffer.
    pub fn collect_grads(&mut self, g: &Graph, vars: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            if !p.value.requires_grad() {
                continue;
            }
            match g.grad(v) {
                Some(delta) => p.value.accumulate_grad(delta),
                None => p.value.accumulate_grad(&vec![0.0; p.value.numel()]),
            }
        }
    }
}

/// Running statistics of a network's batch-norm layers, by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BufferSet {
    pub(crate) entries: Vec<(String, BnState)>,
}

impl BufferSet {
    pub(crate) fn push(&mut self, name: String, state: BnState) -> usize {
        self.entries.push((name, state));
        self.entries.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BnState)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut BnState> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Draws weights from `Normal(0, INIT_STD)` in parameter order; biases and
/// `beta` start at 0, `gamma` at 1.
pub(crate) struct Initializer {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        }
    }

    pub fn weight(&mut self, shape: Vec<usize>) -> Tensor {
        let (rng, normal) = (&mut self.rng, &self.normal);
        Tensor::from_fn(shape, |_| normal.sample(rng) as f32)
    }
}

pub(crate) fn scaled_width(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(1)
}
