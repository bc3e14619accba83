use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
pub(crate) struct Saved {
    pub a: Var,
    pub b: Var,
    denom: f64,
    dice: f64,
}

#[derive(Debug)]
pub(crate) struct ChannelSaved {
    pub a: Var,
    pub b: Var,
    denoms: Vec<f64>,
    dice: Vec<f64>,
}

struct Moments {
    ab: f64,
    aa: f64,
    bb: f64,
}

impl Moments {
    fn accumulate<'a>(pairs: impl Iterator<Item = (&'a f32, &'a f32)>) -> Self {
        let mut m = Moments {
            ab: 0.0,
            aa: 0.0,
            bb: 0.0,
        };
        for (&x, &y) in pairs {
            let (x, y) = (x as f64, y as f64);
            m.ab += x * y;
            m.aa += x * x;
            m.bb += y * y;
        }
        m
    }

    fn dice(&self, eps: f64) -> (f64, f64) {
        let denom = self.aa + self.bb + eps;
        (2.0 * self.ab / denom, denom)
    }
}

// d dice / d a_i = (2 b_i - 2 dice a_i) / denom, and symmetrically for b.
fn dice_grads(a: &[f32], b: &[f32], dice: f64, denom: f64, upstream: f64, ga: &mut [f32], gb: &mut [f32]) {
    let scale = upstream / denom;
    for i in 0..a.len() {
        let (x, y) = (a[i] as f64, b[i] as f64);
        ga[i] = (scale * (2.0 * y - 2.0 * dice * x)) as f32;
        gb[i] = (scale * (2.0 * x - 2.0 * dice * y)) as f32;
    }
}

impl Graph {
    /// Generalized dice `2 sum(a*b) / (sum(a^2) + sum(b^2) + eps)` over all
    /// elements, as a one-element tensor.
    pub fn dice(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape("dice", a, b)?;
        let m = Moments::accumulate(self.value(a).data().iter().zip(self.value(b).data()));
        let (dice, denom) = m.dice(eps);
        self.push(
            "dice",
            Op::Dice(Saved { a, b, denom, dice }),
            Tensor::scalar(dice as f32),
            &[a, b],
        )
    }

    /// Generalized dice per channel of `[N, C, ...]` tensors, reducing over
    /// the batch and all trailing axes. Returns a `[C]` tensor.
    pub fn channel_dice(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape("channel_dice", a, b)?;
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::dim(
                "channel_dice",
                format!("need a channel axis, got shape {shape:?}"),
            ));
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut dice = Vec::with_capacity(c);
        let mut denoms = Vec::with_capacity(c);
        for ch in 0..c {
            let ranges = (0..n).flat_map(|i| (i * c + ch) * inner..(i * c + ch + 1) * inner);
            let m = Moments::accumulate(ranges.map(|j| (&ta[j], &tb[j])));
            let (d, denom) = m.dice(eps);
            dice.push(d);
            denoms.push(denom);
        }
        let value = Tensor::new(vec![c], dice.iter().map(|&d| d as f32).collect())?;
        self.push(
            "channel_dice",
            Op::ChannelDice(ChannelSaved { a, b, denoms, dice }),
            value,
            &[a, b],
        )
    }
}

impl Saved {
    pub(super) fn backward(&self, a: &Tensor, b: &Tensor, upstream: f32) -> (Vec<f32>, Vec<f32>) {
        let mut ga = vec![0.0f32; a.numel()];
        let mut gb = vec![0.0f32; b.numel()];
        dice_grads(
            a.data(),
            b.data(),
            self.dice,
            self.denom,
            upstream as f64,
            &mut ga,
            &mut gb,
        );
        (ga, gb)
    }
}

impl ChannelSaved {
    pub(super) fn backward(&self, a: &Tensor, b: &Tensor, gy: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let (n, c) = (a.shape()[0], a.shape()[1]);
        let inner: usize = a.shape()[2..].iter().product();
        let mut ga = vec![0.0f32; a.numel()];
        let mut gb = vec![0.0f32; b.numel()];
        for (ch, &g) in gy.iter().enumerate().take(c) {
            for i in 0..n {
                let r = (i * c + ch) * inner..(i * c + ch + 1) * inner;
                dice_grads(
                    &a.data()[r.clone()],
                    &b.data()[r.clone()],
                    self.dice[ch],
                    self.denoms[ch],
                    g as f64,
                    &mut ga[r.clone()],
                    &mut gb[r],
                );
            }
        }
        (ga, gb)
    }
}
