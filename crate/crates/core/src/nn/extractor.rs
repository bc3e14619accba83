use super::{scaled_width, BufferSet, Initializer, ParamSet};
#[cfg(test)]
use crate::autodiff::BN_MOMENTUM;
use crate::autodiff::{Activation, BnState, ConvSpec, Graph, Mode, Var, LEAKY_RELU_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractorConfig {
    pub condition_channels: usize,
    pub seg_channels: usize,
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    pub padding: usize,
    pub kernel: usize,
    pub width_scale: f64,
    pub init_seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            condition_channels: 3,
            seg_channels: 1,
            widths: vec![32, 64, 128, 256],
            strides: vec![2, 2, 2, 1],
            padding: 1,
            kernel: 4,
            width_scale: 1.0,
            init_seed: 1,
        }
    }
}

impl ExtractorConfig {
    pub fn scaled_widths(&self) -> Vec<usize> {
        self.widths.iter().map(|&w| scaled_width(w, self.width_scale)).collect()
    }

    fn spec(&self, layer: usize) -> ConvSpec {
        ConvSpec::square(self.kernel, self.strides[layer], self.padding)
    }

    /// Spatial size of every emitted feature map for an `size x size` input.
    pub fn output_sizes(&self, size: usize) -> Result<Vec<usize>> {
        let mut s = size;
        (0..self.widths.len())
            .map(|i| {
                s = self.spec(i).conv_output_size([s, s])?[0];
                Ok(s)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.len() != self.strides.len() {
            return Err(Error::Contract(format!(
                "extractor config: {} widths vs {} strides",
                self.widths.len(),
                self.strides.len()
            )));
        }
        if self.widths.contains(&0) || self.strides.contains(&0) || self.kernel == 0 {
            return Err(Error::Contract("extractor config: sizes must be positive".into()));
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(Error::Contract(format!(
                "extractor config: width scale {} outside (0, 1]",
                self.width_scale
            )));
        }
        Ok(())
    }
}

/// Per-layer feature maps, shallowest first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    pub layers: Vec<Var>,
}

/// Anything that turns a (condition, segmentation) pair into a pyramid of
/// feature maps on a graph.
pub trait PyramidExtractor {
    fn extract_pyramid(&mut self, g: &mut Graph, condition: Var, seg: Var) -> Result<FeaturePyramid>;
}

/// Conv 4x4 -> batch norm -> leaky ReLU, repeated per configured width. The
/// input is the condition image concatenated with the segmentation map.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    config: ExtractorConfig,
    params: ParamSet,
    buffers: BufferSet,
}

impl FeatureExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(config.init_seed);
        let mut params = ParamSet::default();
        let mut buffers = BufferSet::default();
        let mut channels = config.condition_channels + config.seg_channels;
        for (i, w) in config.scaled_widths().into_iter().enumerate() {
            let name = format!("fx{}", i + 1);
            let k = config.kernel;
            params.push(format!("{name}.weight"), init.weight(vec![w, channels, k, k]));
            params.push(format!("{name}.bias"), Tensor::zeros(vec![w]));
            params.push(format!("{name}.bn.gamma"), Tensor::full(vec![w], 1.0));
            params.push(format!("{name}.bn.beta"), Tensor::zeros(vec![w]));
            buffers.push(format!("{name}.bn"), BnState::new(w));
            channels = w;
        }
        Ok(FeatureExtractor {
            config,
            params,
            buffers,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn buffers(&self) -> &BufferSet {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut BufferSet {
        &mut self.buffers
    }

    pub fn extract(
        &mut self,
        g: &mut Graph,
        vars: &[Var],
        condition: Var,
        seg: Var,
        mode: Mode,
    ) -> Result<FeaturePyramid> {
        let [n, c, h, w] = g.value(condition).dims4("feature_extract")?;
        let [ns, cs, hs, ws] = g.value(seg).dims4("feature_extract")?;
        if c != self.config.condition_channels || cs != self.config.seg_channels || (n, h, w) != (ns, hs, ws) {
            return Err(Error::dim(
                "feature_extract",
                format!("condition [{n}, {c}, {h}, {w}] and segmentation [{ns}, {cs}, {hs}, {ws}] do not conform"),
            ));
        }
        let mut x = g.concat_channels(condition, seg)?;
        let mut layers = Vec::with_capacity(self.config.widths.len());
        for i in 0..self.config.widths.len() {
            let p = &vars[4 * i..4 * i + 4];
            x = g.conv2d(x, p[0], p[1], self.config.spec(i))?;
            x = g.batch_norm(x, p[2], p[3], &mut self.buffers.entries[i].1, mode)?;
            x = g.activation(x, Activation::LeakyRelu(LEAKY_RELU_SLOPE))?;
            layers.push(x);
        }
        Ok(FeaturePyramid { layers })
    }

    /// Replaces the batch-norm running statistics with the average batch
    /// statistics over `batches` of `(condition, segmentation)` pairs. Weights
    /// are left untouched.
    pub fn calibrate<'a>(&mut self, batches: impl IntoIterator<Item = (&'a Tensor, &'a Tensor)>) -> Result<usize> {
        let saved: Vec<f32> = self.buffers.entries.iter().map(|(_, s)| s.momentum).collect();
        let mut seen = 0;
        let run = || -> Result<()> {
            for (condition, seg) in batches {
                seen += 1;
                for (_, state) in &mut self.buffers.entries {
                    state.momentum = 1.0 / seen as f32;
                }
                let mut g = Graph::new();
                let vars: Vec<Var> = self.params.iter().map(|p| g.constant(p.value.clone())).collect();
                let (c, s) = (g.constant(condition.clone()), g.constant(seg.clone()));
                self.extract(&mut g, &vars, c, s, Mode::Train)?;
            }
            Ok(())
        };
        let outcome = run();
        for ((_, state), m) in self.buffers.entries.iter_mut().zip(saved) {
            state.momentum = m;
        }
        outcome.map(|()| seen)
    }

    /// Binds the parameters to `g` for use as a [`PyramidExtractor`] in the
    /// given mode.
    pub fn bind<'a>(&'a mut self, g: &mut Graph, mode: Mode) -> BoundExtractor<'a> {
        let vars = self.params.bind(g);
        BoundExtractor { net: self, vars, mode }
    }
}

pub struct BoundExtractor<'a> {
    net: &'a mut FeatureExtractor,
    vars: Vec<Var>,
    mode: Mode,
}

impl BoundExtractor<'_> {
    /// Accumulates gradients of the last backward pass into trainable
    /// extractor parameters.
    pub fn collect_grads(&mut self, g: &Graph) {
        self.net.params.collect_grads(g, &self.vars);
    }
}

impl PyramidExtractor for BoundExtractor<'_> {
    fn extract_pyramid(&mut self, g: &mut Graph, condition: Var, seg: Var) -> Result<FeaturePyramid> {
        self.net.extract(g, &self.vars, condition, seg, self.mode)
    }
}
