use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Negative-side slope of the encoder and feature-extractor activations.
pub const LEAKY_RELU_SLOPE: f32 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f32),
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    // Subgradient at the kink: 0 for ReLU, the slope for leaky ReLU.
    pub(super) fn backward(self, x: &[f32], y: &[f32], gy: &[f32]) -> Vec<f32> {
        match self {
            Activation::LeakyRelu(slope) => x
                .iter()
                .zip(gy)
                .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                .collect(),
            Activation::Relu => x.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
            Activation::Tanh => y.iter().zip(gy).map(|(&t, &g)| g * (1.0 - t * t)).collect(),
        }
    }
}

impl Graph {
    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let name = match kind {
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        };
        self.push(name, Op::Activation { input, kind }, value, &[input])
    }

    /// Max pooling with a square window; trailing rows/columns that do not
    /// fill a window are dropped. Ties route the gradient to the first
    /// element in raster order.
    pub fn max_pool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        const OP: &str = "max_pool2d";
        let x = self.value(input);
        let [n, c, h, w] = x.dims4(OP)?;
        if window == 0 || stride == 0 || h < window || w < window {
            return Err(Error::dim(
                OP,
                format!("window {window}/stride {stride} does not fit spatial size {h}x{w}"),
            ));
        }
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let mut data = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                            if x.data()[idx] > x.data()[best] {
                                best = idx;
                            }
                        }
                    }
                    data.push(x.data()[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], data)?;
        self.push(OP, Op::MaxPool { input, argmax }, value, &[input])
    }

    /// Concatenates two `[N, C, H, W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        const OP: &str = "concat_channels";
        let (ta, tb) = (self.value(a), self.value(b));
        let [n, ca, h, w] = ta.dims4(OP)?;
        let [nb, cb, hb, wb] = tb.dims4(OP)?;
        for (axis, (x, y)) in [(0, (n, nb)), (2, (h, hb)), (3, (w, wb))] {
            if x != y {
                return Err(Error::dim(OP, format!("axis {axis} differs: {x} vs {y}")));
            }
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&ta.data()[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&tb.data()[i * cb * plane..(i + 1) * cb * plane]);
        }
        let value = Tensor::new(vec![n, ca + cb, h, w], data)?;
        self.push(OP, Op::Concat { a, b }, value, &[a, b])
    }

    /// Channels `start..start + len` of a `[N, C, H, W]` tensor.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        const OP: &str = "slice_channels";
        let x = self.value(input);
        let [n, c, h, w] = x.dims4(OP)?;
        if len == 0 || start + len > c {
            return Err(Error::dim(
                OP,
                format!("channel range {start}..{} outside axis 1 of size {c}", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for i in 0..n {
            let from = (i * c + start) * plane;
            data.extend_from_slice(&x.data()[from..from + len * plane]);
        }
        let value = Tensor::new(vec![n, len, h, w], data)?;
        self.push(OP, Op::SliceChannels { input, start }, value, &[input])
    }
}

pub(super) fn concat_backward(a: &Tensor, b: &Tensor, gy: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (n, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let plane = a.shape()[2] * a.shape()[3];
    let mut ga = Vec::with_capacity(a.numel());
    let mut gb = Vec::with_capacity(b.numel());
    for i in 0..n {
        let base = i * (ca + cb) * plane;
        ga.extend_from_slice(&gy[base..base + ca * plane]);
        gb.extend_from_slice(&gy[base + ca * plane..base + (ca + cb) * plane]);
    }
    (ga, gb)
}

pub(super) fn slice_backward(input: &Tensor, out_shape: &[usize], start: usize, gy: &[f32]) -> Vec<f32> {
    let [n, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let len = out_shape[1];
    let plane = h * w;
    let mut g = vec![0.0f32; input.numel()];
    for i in 0..n {
        let to = (i * c + start) * plane;
        g[to..to + len * plane].copy_from_slice(&gy[i * len * plane..(i + 1) * len * plane]);
    }
    g
}
