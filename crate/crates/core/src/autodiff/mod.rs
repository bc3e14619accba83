//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends one node to a [`Graph`]. [`Graph::backward`]
//! walks the nodes in exact reverse order of execution, so a node's upstream
//! gradient is complete (summed over all consumers) before it is visited.

mod conv;
mod dice;
mod norm;
mod pointwise;

pub use conv::ConvSpec;
pub use norm::{BnState, BN_EPS, BN_MOMENTUM};
pub use pointwise::{Activation, LEAKY_RELU_SLOPE};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-norm behavior: batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
    },
    BatchNorm(norm::Saved),
    Activation {
        input: Var,
        kind: Activation,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Affine {
        input: Var,
        scale: f32,
    },
    Sum {
        input: Var,
    },
    Dice(dice::Saved),
    ChannelDice(dice::ChannelSaved),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of executed primitives.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    check_finite: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that rejects non-finite outputs of every primitive.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            check_finite: true,
        }
    }

    pub fn without_finite_checks() -> Self {
        Graph {
            check_finite: false,
            ..Graph::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it is differentiable iff `tensor.requires_grad()`.
    pub fn tensor(&mut self, mut tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        tensor.clear_grad();
        self.nodes.push(Node {
            op: Op::Leaf,
            value: tensor,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.tensor(tensor.with_requires_grad(false))
    }

    pub fn variable(&mut self, tensor: Tensor) -> Var {
        self.tensor(tensor.with_requires_grad(true))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, var: Var) -> Option<&[f32]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn push(&mut self, name: &'static str, op: Op, value: Tensor, inputs: &[Var]) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Propagates d(loss)/d(node) from a one-element `loss` back to every
    /// leaf that requires a gradient. Gradients of a previous pass are
    /// discarded; read results with [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a single-element loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for index in (0..=loss.0).rev() {
            let node = &self.nodes[index];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = self.grads[index].take() else {
                continue;
            };
            let contributions = self.node_backward(index, &upstream);
            for (var, delta) in contributions {
                accumulate(&mut self.grads[var.0], delta);
            }
        }
        Ok(())
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn node_backward(&self, index: usize, gy: &[f32]) -> Vec<(Var, Vec<f32>)> {
        let node = &self.nodes[index];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let grads = conv::conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    spec,
                    gy,
                    [self.needs(*input), self.needs(*weight), self.needs(*bias)],
                );
                push_some(&mut out, [*input, *weight, *bias], grads);
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let grads = conv::conv_transpose2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    spec,
                    gy,
                    [self.needs(*input), self.needs(*weight), self.needs(*bias)],
                );
                push_some(&mut out, [*input, *weight, *bias], grads);
            }
            Op::BatchNorm(saved) => {
                let needs = [self.needs(saved.input), self.needs(saved.gamma), self.needs(saved.beta)];
                let grads = saved.backward(self.value(saved.gamma), gy, needs);
                push_some(&mut out, [saved.input, saved.gamma, saved.beta], grads);
            }
            Op::Activation { input, kind } => {
                let g = kind.backward(self.value(*input).data(), node.value.data(), gy);
                out.push((*input, g));
            }
            Op::MaxPool { input, argmax } => {
                let mut g = vec![0.0f32; self.value(*input).numel()];
                for (&src, &d) in argmax.iter().zip(gy) {
                    g[src] += d;
                }
                out.push((*input, g));
            }
            Op::Concat { a, b } => {
                let (ga, gb) = pointwise::concat_backward(self.value(*a), self.value(*b), gy);
                if self.needs(*a) {
                    out.push((*a, ga));
                }
                if self.needs(*b) {
                    out.push((*b, gb));
                }
            }
            Op::SliceChannels { input, start } => {
                let g = pointwise::slice_backward(self.value(*input), node.value.shape(), *start, gy);
                out.push((*input, g));
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        out.push((v, gy.to_vec()));
                    }
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    out.push((*a, gy.iter().zip(vb).map(|(g, y)| g * y).collect()));
                }
                if self.needs(*b) {
                    out.push((*b, gy.iter().zip(va).map(|(g, x)| g * x).collect()));
                }
            }
            Op::Affine { input, scale } => {
                out.push((*input, gy.iter().map(|g| g * scale).collect()));
            }
            Op::Sum { input } => {
                out.push((*input, vec![gy[0]; self.value(*input).numel()]));
            }
            Op::Dice(saved) => {
                let (ga, gb) = saved.backward(self.value(saved.a), self.value(saved.b), gy[0]);
                if self.needs(saved.a) {
                    out.push((saved.a, ga));
                }
                if self.needs(saved.b) {
                    out.push((saved.b, gb));
                }
            }
            Op::ChannelDice(saved) => {
                let (ga, gb) = saved.backward(self.value(saved.a), self.value(saved.b), gy);
                if self.needs(saved.a) {
                    out.push((saved.a, ga));
                }
                if self.needs(saved.b) {
                    out.push((saved.b, gb));
                }
            }
        }
        out
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, format!("operand shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push("add", Op::Add { a, b }, value, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push("mul", Op::Mul { a, b }, value, &[a, b])
    }

    /// `scale * input + shift`, elementwise.
    pub fn affine(&mut self, input: Var, scale: f32, shift: f32) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| scale * v + shift).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push("affine", Op::Affine { input, scale }, value, &[input])
    }

    /// Sum of all elements (64-bit accumulation) as a one-element tensor.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.value(input).sum();
        self.push("sum", Op::Sum { input }, Tensor::scalar(total as f32), &[input])
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

fn accumulate(slot: &mut Option<Vec<f32>>, delta: Vec<f32>) {
    match slot {
        Some(existing) => existing.iter_mut().zip(&delta).for_each(|(g, d)| *g += d),
        None => *slot = Some(delta),
    }
}

fn push_some<const K: usize>(out: &mut Vec<(Var, Vec<f32>)>, vars: [Var; K], grads: [Option<Vec<f32>>; K]) {
    for (var, grad) in vars.into_iter().zip(grads) {
        if let Some(g) = grad {
            out.push((var, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::from_fn(vec![2, 3], |i| i as f32 * 0.5 - 1.0));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn shared_operand_accumulates_both_paths() {
        // x feeds two consumers: loss = sum(3x) + sum(x*x)
        let data = vec![0.5, -1.5, 2.0, 4.0];
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(vec![4], data.clone()).unwrap());
        let a = g.affine(x, 3.0, 0.0).unwrap();
        let b = g.mul(x, x).unwrap();
        let sa = g.sum(a).unwrap();
        let sb = g.sum(b).unwrap();
        let loss = g.add(sa, sb).unwrap();
        g.backward(loss).unwrap();
        // single-path equivalent: d/dx (x^2 + 3x) = 2x + 3
        let expected: Vec<f32> = data.iter().map(|v| 2.0 * v + 3.0).collect();
        assert_eq!(g.grad(x).unwrap(), expected.as_slice());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(vec![2]));
        let y = g.affine(x, 2.0, 0.0).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::full(vec![2], 2.0));
        let x = g.variable(Tensor::full(vec![2], 3.0));
        let p = g.mul(c, x).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::full(vec![1], f32::MAX));
        let err = g.affine(x, 4.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "affine" }));
        let mut lax = Graph::without_finite_checks();
        let x = lax.variable(Tensor::full(vec![1], f32::MAX));
        assert!(lax.affine(x, 4.0, 0.0).is_ok());
    }
}
