//! Central finite-difference gradient checking.
//!
//! The analytic gradient comes from [`Graph::backward`] on the engine's
//! `f32` forward pass. The numeric gradient differentiates an independent
//! `f64` reference implementation of the same function, so rounding of the
//! stored `f32` outputs does not swamp the difference quotient. The engine
//! forward is compared against the reference as well, which ties the two
//! together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, BnState, ConvSpec, Graph, Mode, Var, BN_EPS, LEAKY_RELU_SLOPE};
use crate::error::{Error, Result};
use crate::losses::{mfm_loss, DEFAULT_SMOOTH};
use crate::nn::{ExtractorConfig, FeatureExtractor, FeaturePyramid, PyramidExtractor};
use crate::tensor::Tensor;

/// Default perturbation.
pub const STEP: f64 = 1e-3;
/// Magnitude below which errors are measured absolutely rather than
/// relative to the gradient.
pub const ERROR_FLOOR: f64 = 1e-6;

/// Builds the engine graph from input variables.
pub type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
/// Evaluates the same function in `f64` on flat input buffers.
pub type Reference = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

/// Worst disagreement found by [`check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// `(input index, element index, analytic, numeric)` at the worst point.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
    /// Largest `|engine - reference| / max(1, |reference|)` over the outputs.
    pub forward_mismatch: f64,
}

/// `|a - n| / max(|a|, |n|, ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Compares analytic gradients of `build` with central differences of
/// `reference` for every element of every input listed in `wrt`. The output
/// is reduced with a random projection drawn from `seed`.
pub fn check(
    inputs: &[Tensor],
    wrt: &[usize],
    seed: u64,
    step: f64,
    build: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
    reference: &dyn Fn(&[Vec<f64>]) -> Vec<f64>,
) -> Result<GradReport> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if wrt.contains(&i) {
                g.variable(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let out = build(&mut g, &vars)?;
    let engine_out = g.value(out).data().to_vec();

    let base: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let ref_out = reference(&base);
    if ref_out.len() != engine_out.len() {
        return Err(Error::Contract(format!(
            "reference produced {} values, engine {}",
            ref_out.len(),
            engine_out.len()
        )));
    }
    let forward_mismatch = engine_out
        .iter()
        .zip(&ref_out)
        .map(|(&e, &r)| (e as f64 - r).abs() / r.abs().max(1.0))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights: Vec<f32> = (0..engine_out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = g.constant(Tensor::new(g.shape(out).to_vec(), weights.clone())?);
    let prod = g.mul(out, w)?;
    let loss = g.sum(prod)?;
    g.backward(loss)?;

    let project = |values: Vec<f64>| -> f64 { values.iter().zip(&weights).map(|(v, &w)| v * w as f64).sum() };
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        forward_mismatch,
    };
    let mut probe = base.clone();
    for &i in wrt {
        let analytic = g
            .grad(vars[i])
            .map(<[f32]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        for (j, &a) in analytic.iter().enumerate() {
            let x = base[i][j];
            probe[i][j] = x + step;
            let plus = project(reference(&probe));
            probe[i][j] = x - step;
            let minus = project(reference(&probe));
            probe[i][j] = x;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(a as f64, numeric);
            report.checked += 1;
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((i, j, a as f64, numeric));
            }
        }
    }
    Ok(report)
}

/// Differentiable primitives covered by [`primitive_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Conv2d,
    ConvTranspose2d,
    BatchNormTrain,
    LeakyRelu,
    Relu,
    Tanh,
    MaxPool,
    Concat,
    Slice,
    Add,
    Mul,
    Affine,
    Sum,
    Dice,
    ChannelDice,
    MfmLoss,
}

impl Primitive {
    pub const ALL: [Primitive; 16] = [
        Primitive::Conv2d,
        Primitive::ConvTranspose2d,
        Primitive::BatchNormTrain,
        Primitive::LeakyRelu,
        Primitive::Relu,
        Primitive::Tanh,
        Primitive::MaxPool,
        Primitive::Concat,
        Primitive::Slice,
        Primitive::Add,
        Primitive::Mul,
        Primitive::Affine,
        Primitive::Sum,
        Primitive::Dice,
        Primitive::ChannelDice,
        Primitive::MfmLoss,
    ];
}

/// Randomized inputs, engine graph and `f64` reference for one primitive.
pub struct Case {
    pub primitive: Primitive,
    pub inputs: Vec<Tensor>,
    pub wrt: Vec<usize>,
    pub build: Build,
    pub reference: Reference,
}

impl Case {
    pub fn run(&self, seed: u64) -> Result<GradReport> {
        check(&self.inputs, &self.wrt, seed, STEP, &*self.build, &*self.reference)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values at least `gap` away from zero, so a step of [`STEP`] never crosses
/// an activation kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>, gap: f32) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m: f32 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced well beyond [`STEP`], so pooling windows have no
/// near-ties.
fn spaced(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, ranks.iter().map(|&r| r as f32 * 0.05 - 1.0).collect()).expect("shape matches")
}

/// Direct-loop `f64` versions of the engine primitives.
#[allow(clippy::too_many_arguments)]
pub mod reference {
    /// `[n, c, h, w]` row-major index.
    fn at(dims: [usize; 4], n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * dims[1] + c) * dims[2] + y) * dims[3] + x
    }

    /// Cross-correlation; `x` is `[n, c, h, w]`, `w` is `[o, c, k, k]`.
    pub fn conv2d(
        x: &[f64],
        xd: [usize; 4],
        w: &[f64],
        o: usize,
        k: usize,
        b: &[f64],
        stride: usize,
        pad: usize,
    ) -> (Vec<f64>, [usize; 4]) {
        let [n, c, h, wd] = xd;
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let od = [n, o, oh, ow];
        let mut out = vec![0.0; n * o * oh * ow];
        for ni in 0..n {
            for oc in 0..o {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b[oc];
                        for ci in 0..c {
                            for u in 0..k {
                                for v in 0..k {
                                    let (yy, xx) = (
                                        (i * stride + u) as isize - pad as isize,
                                        (j * stride + v) as isize - pad as isize,
                                    );
                                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
                                        continue;
                                    }
                                    acc += x[at(xd, ni, ci, yy as usize, xx as usize)]
                                        * w[((oc * c + ci) * k + u) * k + v];
                                }
                            }
                        }
                        out[at(od, ni, oc, i, j)] = acc;
                    }
                }
            }
        }
        (out, od)
    }

    /// Scatter form of the transposed convolution; `w` is `[c, o, k, k]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose2d(
        x: &[f64],
        xd: [usize; 4],
        w: &[f64],
        o: usize,
        k: usize,
        b: &[f64],
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> (Vec<f64>, [usize; 4]) {
        let [n, c, h, wd] = xd;
        let oh = (h - 1) * stride + k + output_padding - 2 * pad;
        let ow = (wd - 1) * stride + k + output_padding - 2 * pad;
        let od = [n, o, oh, ow];
        let mut out = vec![0.0; n * o * oh * ow];
        for ni in 0..n {
            for oc in 0..o {
                for i in 0..oh {
                    for j in 0..ow {
                        out[at(od, ni, oc, i, j)] = b[oc];
                    }
                }
            }
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..wd {
                        let v = x[at(xd, ni, ci, i, j)];
                        for oc in 0..o {
                            for u in 0..k {
                                for t in 0..k {
                                    let (yy, xx) = (
                                        (i * stride + u) as isize - pad as isize,
                                        (j * stride + t) as isize - pad as isize,
                                    );
                                    if yy < 0 || xx < 0 || yy >= oh as isize || xx >= ow as isize {
                                        continue;
                                    }
                                    out[at(od, ni, oc, yy as usize, xx as usize)] +=
                                        v * w[((ci * o + oc) * k + u) * k + t];
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, od)
    }

    /// Per-channel normalization by batch statistics (biased variance).
    pub fn batch_norm_train(x: &[f64], xd: [usize; 4], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
        let [n, c, h, w] = xd;
        let count = (n * h * w) as f64;
        let mut out = vec![0.0; x.len()];
        for ci in 0..c {
            let idx: Vec<usize> = (0..n)
                .flat_map(|ni| (0..h * w).map(move |p| (ni * c + ci) * h * w + p))
                .collect();
            let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / count;
            let var = idx.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / count;
            let inv = 1.0 / (var + eps).sqrt();
            for &i in &idx {
                out[i] = gamma[ci] * (x[i] - mean) * inv + beta[ci];
            }
        }
        out
    }

    /// Affine map by fixed statistics.
    pub fn batch_norm_eval(
        x: &[f64],
        xd: [usize; 4],
        gamma: &[f64],
        beta: &[f64],
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Vec<f64> {
        let plane = xd[2] * xd[3];
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = (i / plane) % xd[1];
                gamma[c] * (v - mean[c]) / (var[c] + eps).sqrt() + beta[c]
            })
            .collect()
    }

    pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
        x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
    }

    pub fn max_pool2(x: &[f64], xd: [usize; 4]) -> Vec<f64> {
        let [n, c, h, w] = xd;
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for nc in 0..n * c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for u in 0..2 {
                        for v in 0..2 {
                            m = m.max(x[(nc * h + 2 * i + u) * w + 2 * j + v]);
                        }
                    }
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn concat(a: &[f64], ca: usize, b: &[f64], cb: usize, n: usize, plane: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(a.len() + b.len());
        for ni in 0..n {
            out.extend_from_slice(&a[ni * ca * plane..(ni + 1) * ca * plane]);
            out.extend_from_slice(&b[ni * cb * plane..(ni + 1) * cb * plane]);
        }
        out
    }

    pub fn dice(a: &[f64], b: &[f64], eps: f64) -> f64 {
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let aa: f64 = a.iter().map(|x| x * x).sum();
        let bb: f64 = b.iter().map(|y| y * y).sum();
        2.0 * ab / (aa + bb + eps)
    }

    /// Dice per channel over `(n, h, w)`.
    pub fn channel_dice(a: &[f64], b: &[f64], xd: [usize; 4], eps: f64) -> Vec<f64> {
        let [n, c, h, w] = xd;
        (0..c)
            .map(|ci| {
                let pick = |t: &[f64]| -> Vec<f64> {
                    (0..n)
                        .flat_map(|ni| t[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w].to_vec())
                        .collect()
                };
                dice(&pick(a), &pick(b), eps)
            })
            .collect()
    }
}

/// Builds the randomized case for `primitive` from `seed`.
pub fn primitive_case(primitive: Primitive, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=2usize);
    let c = rng.random_range(1..=3usize);
    let h = rng.random_range(3..=5usize);
    let w = rng.random_range(3..=5usize);
    let eps = DEFAULT_SMOOTH;
    let (inputs, wrt, build, reference): (Vec<Tensor>, Vec<usize>, Build, Reference) = match primitive {
        Primitive::Conv2d => {
            let o = rng.random_range(1..=3usize);
            let k = rng.random_range(1..=3usize);
            let stride = rng.random_range(1..=2usize);
            let pad = rng.random_range(0..k);
            let spec = ConvSpec::square(k, stride, pad);
            let xd = [n, c, h, w];
            (
                vec![
                    uniform(&mut rng, xd.to_vec()),
                    uniform(&mut rng, vec![o, c, k, k]),
                    uniform(&mut rng, vec![o]),
                ],
                vec![0, 1, 2],
                Box::new(move |g, v| g.conv2d(v[0], v[1], v[2], spec)),
                Box::new(move |v| reference::conv2d(&v[0], xd, &v[1], o, k, &v[2], stride, pad).0),
            )
        }
        Primitive::ConvTranspose2d => {
            let o = rng.random_range(1..=3usize);
            let k = rng.random_range(1..=3usize);
            let stride = rng.random_range(1..=2usize);
            let pad = rng.random_range(0..k);
            let op = rng.random_range(0..stride);
            let spec = ConvSpec::square(k, stride, pad).with_output_padding([op, op]);
            let xd = [n, c, h, w];
            (
                vec![
                    uniform(&mut rng, xd.to_vec()),
                    uniform(&mut rng, vec![c, o, k, k]),
                    uniform(&mut rng, vec![o]),
                ],
                vec![0, 1, 2],
                Box::new(move |g, v| g.conv_transpose2d(v[0], v[1], v[2], spec)),
                Box::new(move |v| reference::conv_transpose2d(&v[0], xd, &v[1], o, k, &v[2], stride, pad, op).0),
            )
        }
        Primitive::BatchNormTrain => {
            let xd = [n, c, h, w];
            (
                vec![
                    uniform(&mut rng, xd.to_vec()),
                    uniform(&mut rng, vec![c]),
                    uniform(&mut rng, vec![c]),
                ],
                vec![0, 1, 2],
                Box::new(move |g, v| g.batch_norm(v[0], v[1], v[2], &mut BnState::new(c), Mode::Train)),
                Box::new(move |v| reference::batch_norm_train(&v[0], xd, &v[1], &v[2], BN_EPS as f64)),
            )
        }
        Primitive::LeakyRelu | Primitive::Relu | Primitive::Tanh => {
            let (kind, f): (Activation, fn(f64) -> f64) = match primitive {
                Primitive::LeakyRelu => (Activation::LeakyRelu(LEAKY_RELU_SLOPE), |v| {
                    reference::leaky_relu(&[v], LEAKY_RELU_SLOPE as f64)[0]
                }),
                Primitive::Relu => (Activation::Relu, |v| v.max(0.0)),
                _ => (Activation::Tanh, f64::tanh),
            };
            (
                vec![away_from_zero(&mut rng, vec![5], 0.05)],
                vec![0],
                Box::new(move |g, v| g.activation(v[0], kind)),
                Box::new(move |v| v[0].iter().map(|&x| f(x)).collect()),
            )
        }
        Primitive::MaxPool => {
            let xd = [n, c, 2 * h, 2 * w];
            (
                vec![spaced(&mut rng, xd.to_vec())],
                vec![0],
                Box::new(|g, v| g.max_pool2d(v[0], 2, 2)),
                Box::new(move |v| reference::max_pool2(&v[0], xd)),
            )
        }
        Primitive::Concat => {
            let c2 = rng.random_range(1..=3usize);
            (
                vec![
                    uniform(&mut rng, vec![n, c, h, w]),
                    uniform(&mut rng, vec![n, c2, h, w]),
                ],
                vec![0, 1],
                Box::new(|g, v| g.concat_channels(v[0], v[1])),
                Box::new(move |v| reference::concat(&v[0], c, &v[1], c2, n, h * w)),
            )
        }
        Primitive::Slice => {
            let total = c + 2;
            let start = rng.random_range(0..total);
            let len = rng.random_range(1..=total - start);
            let plane = h * w;
            (
                vec![uniform(&mut rng, vec![n, total, h, w])],
                vec![0],
                Box::new(move |g, v| g.slice_channels(v[0], start, len)),
                Box::new(move |v| {
                    (0..n)
                        .flat_map(|ni| v[0][(ni * total + start) * plane..(ni * total + start + len) * plane].to_vec())
                        .collect()
                }),
            )
        }
        Primitive::Add => (
            vec![uniform(&mut rng, vec![5]), uniform(&mut rng, vec![5])],
            vec![0, 1],
            Box::new(|g, v| g.add(v[0], v[1])),
            Box::new(|v| v[0].iter().zip(&v[1]).map(|(a, b)| a + b).collect()),
        ),
        Primitive::Mul => (
            vec![uniform(&mut rng, vec![5]), uniform(&mut rng, vec![5])],
            vec![0, 1],
            Box::new(|g, v| g.mul(v[0], v[1])),
            Box::new(|v| v[0].iter().zip(&v[1]).map(|(a, b)| a * b).collect()),
        ),
        Primitive::Affine => {
            let scale = rng.random_range(-2.0..2.0f32);
            let shift = rng.random_range(-1.0..1.0f32);
            (
                vec![uniform(&mut rng, vec![5])],
                vec![0],
                Box::new(move |g, v| g.affine(v[0], scale, shift)),
                Box::new(move |v| v[0].iter().map(|&x| scale as f64 * x + shift as f64).collect()),
            )
        }
        Primitive::Sum => (
            vec![uniform(&mut rng, vec![n, c, h, w])],
            vec![0],
            Box::new(|g, v| g.sum(v[0])),
            Box::new(|v| vec![v[0].iter().sum()]),
        ),
        Primitive::Dice => (
            vec![uniform(&mut rng, vec![5]), uniform(&mut rng, vec![5])],
            vec![0, 1],
            Box::new(move |g, v| g.dice(v[0], v[1], eps)),
            Box::new(move |v| vec![reference::dice(&v[0], &v[1], eps)]),
        ),
        Primitive::ChannelDice => {
            let xd = [n, c, h, w];
            (
                vec![uniform(&mut rng, xd.to_vec()), uniform(&mut rng, xd.to_vec())],
                vec![0, 1],
                Box::new(move |g, v| g.channel_dice(v[0], v[1], eps)),
                Box::new(move |v| reference::channel_dice(&v[0], &v[1], xd, eps)),
            )
        }
        Primitive::MfmLoss => mfm_case(&mut rng, n, seed),
    };
    Case {
        primitive,
        inputs,
        wrt,
        build,
        reference,
    }
}

/// Feature matching through a single conv -> batch norm (eval) -> leaky ReLU
/// layer with fixed weights.
fn mfm_case(rng: &mut ChaCha8Rng, n: usize, seed: u64) -> (Vec<Tensor>, Vec<usize>, Build, Reference) {
    let size = 2 * rng.random_range(2..=3usize);
    let width = rng.random_range(1..=3usize);
    let cfg = ExtractorConfig {
        widths: vec![width],
        strides: vec![2],
        init_seed: seed,
        ..ExtractorConfig::default()
    };
    let net = FeatureExtractor::new(cfg).expect("valid extractor config");
    let params: Vec<Tensor> = net.params().iter().map(|p| p.value.clone()).collect();
    let stats: Vec<(Vec<f64>, Vec<f64>)> = net
        .buffers()
        .iter()
        .map(|(_, s)| {
            let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
            (widen(&s.running_mean), widen(&s.running_var))
        })
        .collect();
    let (k, pad, stride) = (net.config().kernel, net.config().padding, 2);
    let fixed: Vec<Vec<f64>> = params
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let net = std::cell::RefCell::new(net);
    let inputs = vec![
        uniform(rng, vec![n, 3, size, size]),
        uniform(rng, vec![n, 1, size, size]),
        uniform(rng, vec![n, 1, size, size]),
    ];
    let build: Build = Box::new(move |g, v| {
        let mut net = net.borrow_mut();
        let mut fx = Frozen { net: &mut net };
        mfm_loss(g, v[0], v[1], v[2], &mut fx, DEFAULT_SMOOTH)
    });
    let reference: Reference = Box::new(move |v| {
        let features = |seg: &[f64]| -> (Vec<f64>, [usize; 4]) {
            let plane = size * size;
            let input = reference::concat(&v[0], 3, seg, 1, n, plane);
            let (conv, od) = reference::conv2d(&input, [n, 4, size, size], &fixed[0], width, k, &fixed[1], stride, pad);
            let (mean, var) = &stats[0];
            let normed = reference::batch_norm_eval(&conv, od, &fixed[2], &fixed[3], mean, var, BN_EPS as f64);
            (reference::leaky_relu(&normed, LEAKY_RELU_SLOPE as f64), od)
        };
        let (ty, od) = features(&v[1]);
        let (py, _) = features(&v[2]);
        let dice = reference::channel_dice(&ty, &py, od, DEFAULT_SMOOTH);
        vec![dice.iter().map(|d| 1.0 - d).sum()]
    });
    (inputs, vec![0, 1, 2], build, reference)
}

/// Eval-mode extractor whose parameters enter the graph as constants.
struct Frozen<'a> {
    net: &'a mut FeatureExtractor,
}

impl PyramidExtractor for Frozen<'_> {
    fn extract_pyramid(&mut self, g: &mut Graph, condition: Var, seg: Var) -> Result<FeaturePyramid> {
        let vars: Vec<Var> = self.net.params().iter().map(|p| g.constant(p.value.clone())).collect();
        self.net.extract(g, &vars, condition, seg, Mode::Eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_exact_gradient() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let r = check(&[x], &[0], 3, STEP, &|g, v| g.mul(v[0], v[0]), &|v| {
            v[0].iter().map(|x| x * x).collect()
        })
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.forward_mismatch, 0.0);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let r = check(&[x], &[0], 3, STEP, &|g, v| g.mul(v[0], v[0]), &|v| {
            v[0].iter().map(|x| x * x * x).collect()
        })
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn floor_applies_to_tiny_gradients() {
        assert_eq!(relative_error(0.0, 1e-8), 1e-2);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
