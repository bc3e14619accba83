use super::{scaled_width, BufferSet, Initializer, ParamSet};
use crate::autodiff::{Activation, BnState, ConvSpec, Graph, Mode, Var, LEAKY_RELU_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const KERNEL: usize = 4;
const STRIDE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub input_channels: usize,
    pub output_channels: usize,
    pub encoder_widths: Vec<usize>,
    /// Multiplies every width; results are rounded and floored at 1.
    pub width_scale: f64,
    pub input_size: usize,
    pub init_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            input_channels: 3,
            output_channels: 1,
            encoder_widths: vec![32, 64, 128, 256, 256, 256, 256, 256],
            width_scale: 1.0,
            input_size: 256,
            init_seed: 0,
        }
    }
}

/// Channel and spatial sizes of one generator block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockShape {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_size: usize,
    pub out_size: usize,
    pub spec: ConvSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorLayout {
    pub encoder: Vec<BlockShape>,
    pub decoder: Vec<BlockShape>,
}

impl GeneratorLayout {
    /// Spatial size at the innermost encoder block.
    pub fn bottleneck_size(&self) -> usize {
        self.encoder.last().map_or(0, |b| b.out_size)
    }
}

impl GeneratorConfig {
    pub fn scaled_widths(&self) -> Vec<usize> {
        self.encoder_widths
            .iter()
            .map(|&w| scaled_width(w, self.width_scale))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(format!("generator config: {msg}")));
        if self.input_channels == 0 || self.output_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad(format!("encoder widths {:?} must be positive", self.encoder_widths));
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return bad(format!("width scale {} outside (0, 1]", self.width_scale));
        }
        if self.input_size < 2 || !self.input_size.is_multiple_of(2) {
            return bad(format!(
                "input size {} must be a positive even integer",
                self.input_size
            ));
        }
        Ok(())
    }

    /// Per-block shapes. Encoder blocks use 4x4/stride 2/padding 1; once the
    /// feature map is 1x1 the padding grows to 2 so the block stays at 1x1.
    /// Each decoder block reuses the spec of the encoder block it mirrors and
    /// picks the output padding that restores that block's input size.
    pub fn layout(&self) -> Result<GeneratorLayout> {
        self.validate()?;
        let widths = self.scaled_widths();
        let depth = widths.len();
        let mut encoder = Vec::with_capacity(depth);
        let mut size = self.input_size;
        let mut channels = self.input_channels;
        for (i, &w) in widths.iter().enumerate() {
            let padding = if size + 2 >= KERNEL { 1 } else { 2 };
            let spec = ConvSpec::square(KERNEL, STRIDE, padding);
            let out = spec.conv_output_size([size, size])?[0];
            encoder.push(BlockShape {
                name: format!("enc{}", i + 1),
                in_channels: channels,
                out_channels: w,
                in_size: size,
                out_size: out,
                spec,
            });
            size = out;
            channels = w;
        }
        let mut decoder = Vec::with_capacity(depth);
        for j in 0..depth {
            let mirror = &encoder[depth - 1 - j];
            let in_channels = if j == 0 {
                mirror.out_channels
            } else {
                decoder.last().map(|d: &BlockShape| d.out_channels).unwrap_or(0) + mirror.out_channels
            };
            let out_channels = if j + 1 == depth {
                self.output_channels
            } else {
                mirror.in_channels
            };
            let base = ((mirror.out_size - 1) * STRIDE + KERNEL) as isize - 2 * mirror.spec.padding[0] as isize;
            let extra = usize::try_from(mirror.in_size as isize - base).map_err(|_| {
                Error::dim(
                    "generator",
                    format!("decoder block {} overshoots size {}", j + 1, mirror.in_size),
                )
            })?;
            let spec = mirror.spec.with_output_padding([extra; 2]);
            let out_size = spec.transpose_output_size([mirror.out_size; 2])?[0];
            decoder.push(BlockShape {
                name: format!("dec{}", j + 1),
                in_channels,
                out_channels,
                in_size: mirror.out_size,
                out_size,
                spec,
            });
        }
        Ok(GeneratorLayout { encoder, decoder })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    shape: BlockShape,
    weight: usize,
    bias: usize,
    norm: Option<(usize, usize, usize)>,
    activation: Activation,
    transposed: bool,
}

/// Encoder-decoder network with skip connections.
///
/// Encoder blocks: conv 4x4/s2 -> batch norm -> leaky ReLU (the first block
/// has no batch norm). Decoder blocks: transposed conv -> batch norm -> ReLU,
/// except the last, which is transposed conv -> tanh. Every decoder block after
/// the first consumes the previous decoder output concatenated with the
/// encoder output of the same spatial size.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    layout: GeneratorLayout,
    params: ParamSet,
    buffers: BufferSet,
    encoder: Vec<Block>,
    decoder: Vec<Block>,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        let layout = config.layout()?;
        let mut init = Initializer::new(config.init_seed);
        let mut params = ParamSet::default();
        let mut buffers = BufferSet::default();
        let mut build = |shape: &BlockShape, transposed: bool, norm: bool, activation: Activation| {
            let k = shape.spec.kernel;
            let wshape = if transposed {
                vec![shape.in_channels, shape.out_channels, k[0], k[1]]
            } else {
                vec![shape.out_channels, shape.in_channels, k[0], k[1]]
            };
            let weight = params.push(format!("{}.weight", shape.name), init.weight(wshape));
            let bias = params.push(format!("{}.bias", shape.name), Tensor::zeros(vec![shape.out_channels]));
            let norm = norm.then(|| {
                let c = shape.out_channels;
                let gamma = params.push(format!("{}.bn.gamma", shape.name), Tensor::full(vec![c], 1.0));
                let beta = params.push(format!("{}.bn.beta", shape.name), Tensor::zeros(vec![c]));
                let state = buffers.push(format!("{}.bn", shape.name), BnState::new(c));
                (gamma, beta, state)
            });
            Block {
                shape: shape.clone(),
                weight,
                bias,
                norm,
                activation,
                transposed,
            }
        };
        let leaky = Activation::LeakyRelu(LEAKY_RELU_SLOPE);
        let encoder: Vec<Block> = layout
            .encoder
            .iter()
            .enumerate()
            .map(|(i, s)| build(s, false, i > 0, leaky))
            .collect();
        let depth = layout.decoder.len();
        let decoder: Vec<Block> = layout
            .decoder
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let last = j + 1 == depth;
                build(s, true, !last, if last { Activation::Tanh } else { Activation::Relu })
            })
            .collect();
        Ok(Generator {
            config,
            layout,
            params,
            buffers,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn layout(&self) -> &GeneratorLayout {
        &self.layout
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

    fn block_forward(
        block: &Block,
        buffers: &mut BufferSet,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let (w, b) = (vars[block.weight], vars[block.bias]);
        let mut h = if block.transposed {
            g.conv_transpose2d(x, w, b, block.shape.spec)?
        } else {
            g.conv2d(x, w, b, block.shape.spec)?
        };
        if let Some((gamma, beta, state)) = block.norm {
            let state = &mut buffers.entries[state].1;
            h = g.batch_norm(h, vars[gamma], vars[beta], state, mode)?;
        }
        g.activation(h, block.activation)
    }

    /// Maps `[N, 3, S, S]` to `[N, 1, S, S]` in `[-1, 1]`. `vars` must come from
    /// `self.params().bind(g)`.
    pub fn forward(&mut self, g: &mut Graph, vars: &[Var], x: Var, mode: Mode) -> Result<Var> {
        let [_, c, h, w] = g.value(x).dims4("generator")?;
        let s = self.config.input_size;
        if c != self.config.input_channels || h != s || w != s {
            return Err(Error::dim(
                "generator",
                format!(
                    "expected [N, {}, {s}, {s}] input, got axes 1..4 = [{c}, {h}, {w}]",
                    self.config.input_channels
                ),
            ));
        }
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "generator expects {} bound parameters, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x;
        for block in &self.encoder {
            h = Self::block_forward(block, &mut self.buffers, g, vars, h, mode)?;
            skips.push(h);
        }
        let depth = self.encoder.len();
        for (j, block) in self.decoder.iter().enumerate() {
            if j > 0 {
                h = g.concat_channels(h, skips[depth - 1 - j])?;
            }
            h = Self::block_forward(block, &mut self.buffers, g, vars, h, mode)?;
        }
        Ok(h)
    }

    /// Replaces the batch-norm running statistics with the average batch
    /// statistics of a train-mode pass over `batches`. Weights are left
    /// untouched.
    pub fn calibrate<'a>(&mut self, batches: impl IntoIterator<Item = &'a Tensor>) -> Result<usize> {
        let saved: Vec<f32> = self.buffers.entries.iter().map(|(_, s)| s.momentum).collect();
        let mut frozen = self.params.clone();
        frozen.set_trainable(false);
        let mut seen = 0;
        let run = || -> Result<()> {
            for x in batches {
                seen += 1;
                for (_, state) in &mut self.buffers.entries {
                    state.momentum = 1.0 / seen as f32;
                }
                let mut g = Graph::new();
                let vars = frozen.bind(&mut g);
                let x = g.constant(x.clone());
                self.forward(&mut g, &vars, x, Mode::Train)?;
            }
            Ok(())
        };
        let outcome = run();
        for ((_, state), m) in self.buffers.entries.iter_mut().zip(saved) {
            state.momentum = m;
        }
        outcome.map(|()| seen)
    }

    /// Convenience forward pass without gradient tracking.
    pub fn predict(&mut self, x: Tensor, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new();
        let mut frozen = self.params.clone();
        frozen.set_trainable(false);
        let vars = frozen.bind(&mut g);
        let x = g.constant(x);
        let y = self.forward(&mut g, &vars, x, mode)?;
        Ok(g.value(y).clone())
    }
}
