use super::{Graph, Mode, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

/// Running statistics of one batch-norm layer.
///
/// The running variance tracks the biased batch variance, the same quantity
/// train mode normalizes with.
#[derive(Clone, Debug, PartialEq)]
pub struct BnState {
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
}

impl BnState {
    pub fn new(channels: usize) -> Self {
        BnState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Debug)]
pub(crate) struct Saved {
    pub input: Var,
    pub gamma: Var,
    pub beta: Var,
    mode: Mode,
    xhat: Vec<f32>,
    inv_std: Vec<f64>,
    dims: [usize; 4],
}

impl Graph {
    /// Per-channel normalization of a `[N, C, H, W]` tensor followed by
    /// `gamma * x + beta`.
    ///
    /// Train mode normalizes with the batch statistics over `N*H*W` and
    /// updates `state` by exponential moving average; eval mode uses `state`.
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, state: &mut BnState, mode: Mode) -> Result<Var> {
        const OP: &str = "batch_norm";
        let x = self.value(input);
        let dims = x.dims4(OP)?;
        let [n, c, h, w] = dims;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(Error::dim(
                    OP,
                    format!("{name} shape {:?} does not match {c} channels on axis 1", self.shape(v)),
                ));
            }
        }
        if state.channels() != c {
            return Err(Error::dim(
                OP,
                format!(
                    "running statistics hold {} channels, input axis 1 has {c}",
                    state.channels()
                ),
            ));
        }
        let plane = h * w;
        let count = n * plane;
        if mode == Mode::Train && count < 2 {
            return Err(Error::DegenerateStatistics { op: OP, count });
        }

        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0f32; x.numel()];
        let mut out = vec![0.0f32; x.numel()];
        let mut inv_std = vec![0.0f64; c];
        let eps = state.eps as f64;
        for ch in 0..c {
            let planes = || (0..n).map(move |i| (i * c + ch) * plane);
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    for s in planes() {
                        sum += x.data()[s..s + plane].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let mean = sum / count as f64;
                    let mut sq = 0.0f64;
                    for s in planes() {
                        sq += x.data()[s..s + plane]
                            .iter()
                            .map(|&v| (v as f64 - mean).powi(2))
                            .sum::<f64>();
                    }
                    (mean, sq / count as f64)
                }
                Mode::Eval => (state.running_mean[ch] as f64, state.running_var[ch] as f64),
            };
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[ch] = istd;
            let (g, b) = (gv[ch] as f64, bv[ch] as f64);
            for s in planes() {
                for j in s..s + plane {
                    let xh = (x.data()[j] as f64 - mean) * istd;
                    xhat[j] = xh as f32;
                    out[j] = (g * xh + b) as f32;
                }
            }
            if mode == Mode::Train {
                let m = state.momentum as f64;
                state.running_mean[ch] = ((1.0 - m) * state.running_mean[ch] as f64 + m * mean) as f32;
                state.running_var[ch] = ((1.0 - m) * state.running_var[ch] as f64 + m * var) as f32;
            }
        }
        let value = Tensor::new(dims.to_vec(), out)?;
        self.push(
            OP,
            Op::BatchNorm(Saved {
                input,
                gamma,
                beta,
                mode,
                xhat,
                inv_std,
                dims,
            }),
            value,
            &[input, gamma, beta],
        )
    }
}

impl Saved {
    pub(super) fn backward(&self, gamma: &Tensor, gy: &[f32], needs: [bool; 3]) -> [Option<Vec<f32>>; 3] {
        let [n, c, h, w] = self.dims;
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut dx = needs[0].then(|| vec![0.0f32; gy.len()]);
        let mut dgamma = vec![0.0f32; c];
        let mut dbeta = vec![0.0f32; c];
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |i| (i * c + ch) * plane..(i * c + ch + 1) * plane);
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for j in idx() {
                sum_dy += gy[j] as f64;
                sum_dy_xhat += gy[j] as f64 * self.xhat[j] as f64;
            }
            dgamma[ch] = sum_dy_xhat as f32;
            dbeta[ch] = sum_dy as f32;
            if let Some(dx) = dx.as_mut() {
                let g = gamma.data()[ch] as f64;
                let istd = self.inv_std[ch];
                match self.mode {
                    Mode::Train => {
                        // dx = g*istd/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                        for j in idx() {
                            let v = count * gy[j] as f64 - sum_dy - self.xhat[j] as f64 * sum_dy_xhat;
                            dx[j] = (g * istd / count * v) as f32;
                        }
                    }
                    Mode::Eval => {
                        for j in idx() {
                            dx[j] = (g * istd * gy[j] as f64) as f32;
                        }
                    }
                }
            }
        }
        [dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    }
}
