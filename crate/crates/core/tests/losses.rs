use odcs_core::losses::{
    dice_loss, generalized_dice, mfm_loss, total_loss, LossConfig, DEFAULT_LAMBDA, DEFAULT_SMOOTH,
};
use odcs_core::nn::{ExtractorConfig, FeatureExtractor, FeaturePyramid, PyramidExtractor};
use odcs_core::{ConvSpec, Graph, Mode, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn value(g: &Graph, v: Var) -> f32 {
    g.value(v).item().unwrap()
}

#[test]
fn lambda_default() {
    assert_eq!(DEFAULT_LAMBDA, 150.0);
    assert_eq!(LossConfig::default().lambda, 150.0);
}

#[test]
fn dice_symmetry_and_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = random(&mut rng, vec![2, 1, 5, 5]);
        let b = random(&mut rng, vec![2, 1, 5, 5]);
        let mut g = Graph::new();
        let (av, bv) = (g.constant(a.clone()), g.constant(b));
        let ab = generalized_dice(&mut g, av, bv, DEFAULT_SMOOTH).unwrap();
        let ba = generalized_dice(&mut g, bv, av, DEFAULT_SMOOTH).unwrap();
        assert_eq!(value(&g, ab).to_bits(), value(&g, ba).to_bits());
        assert!((-1.0..=1.0).contains(&value(&g, ab)));
        for k in [0.5f32, 1.0, 2.0] {
            let scaled = g.affine(av, k, 0.0).unwrap();
            let d = generalized_dice(&mut g, av, scaled, DEFAULT_SMOOTH).unwrap();
            let expected = 2.0 * k as f64 / (1.0 + (k * k) as f64);
            assert!((value(&g, d) as f64 - expected).abs() < 1e-5, "k={k}");
        }
    }
}

#[test]
fn moving_prediction_toward_truth_lowers_dice_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let y = random(&mut rng, vec![1, 1, 6, 6]);
        let start = random(&mut rng, vec![1, 1, 6, 6]);
        let mut last = f32::INFINITY;
        for step in 0..5 {
            let t = step as f32 / 4.0;
            let blend = Tensor::from_fn(vec![1, 1, 6, 6], |i| (1.0 - t) * start.data()[i] + t * y.data()[i]);
            let mut g = Graph::new();
            let (yv, pv) = (g.constant(y.clone()), g.constant(blend));
            let l = dice_loss(&mut g, yv, pv, DEFAULT_SMOOTH).unwrap();
            let l = value(&g, l);
            assert!(l < last, "t={t}: {l} !< {last}");
            last = l;
        }
    }
}

/// Extractor at 1/8 width with running statistics calibrated on random data.
fn small_extractor() -> FeatureExtractor {
    let mut fx = FeatureExtractor::new(ExtractorConfig {
        width_scale: 0.125,
        ..ExtractorConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = random(&mut rng, vec![4, 3, 32, 32]);
    let y = random(&mut rng, vec![4, 1, 32, 32]);
    fx.calibrate([(&x, &y)]).unwrap();
    fx
}

#[test]
fn identical_prediction_gives_zero_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fx = small_extractor();
    let channels: usize = fx.config().scaled_widths().iter().sum();
    let x = random(&mut rng, vec![2, 3, 32, 32]);
    let y = random(&mut rng, vec![2, 1, 32, 32]);
    let mut g = Graph::new();
    let (xv, yv) = (g.constant(x), g.constant(y.clone()));
    let yhat = g.constant(y);
    let mut bound = fx.bind(&mut g, Mode::Eval);
    let terms = total_loss(&mut g, xv, yv, yhat, &mut bound, &LossConfig::default()).unwrap();
    assert!(value(&g, terms.dice).abs() < 1e-5);
    assert!(value(&g, terms.mfm).abs() < channels as f32 * 1e-5);
    assert!(value(&g, terms.total).abs() < 1e-3);
}

#[test]
fn mfm_is_bounded_and_lambda_zero_total_is_mfm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fx = small_extractor();
    let channels: usize = fx.config().scaled_widths().iter().sum();
    for _ in 0..3 {
        let x = random(&mut rng, vec![2, 3, 32, 32]);
        let y = random(&mut rng, vec![2, 1, 32, 32]);
        let p = random(&mut rng, vec![2, 1, 32, 32]);

        let mut g1 = Graph::new();
        let (xv, yv, pv) = (g1.constant(x.clone()), g1.constant(y.clone()), g1.constant(p.clone()));
        let mut bound = fx.bind(&mut g1, Mode::Eval);
        let mfm = mfm_loss(&mut g1, xv, yv, pv, &mut bound, DEFAULT_SMOOTH).unwrap();
        let mfm = value(&g1, mfm);
        assert!((0.0..=2.0 * channels as f32).contains(&mfm), "{mfm}");

        let mut g2 = Graph::new();
        let (xv, yv, pv) = (g2.constant(x), g2.constant(y), g2.constant(p));
        let mut bound = fx.bind(&mut g2, Mode::Eval);
        let cfg = LossConfig {
            lambda: 0.0,
            ..LossConfig::default()
        };
        let terms = total_loss(&mut g2, xv, yv, pv, &mut bound, &cfg).unwrap();
        assert_eq!(value(&g2, terms.total).to_bits(), mfm.to_bits());
    }
}

/// One 2x2 convolution over the concatenated inputs, no normalization.
struct ToyExtractor {
    weight: Tensor,
    bias: Tensor,
}

impl PyramidExtractor for ToyExtractor {
    fn extract_pyramid(&mut self, g: &mut Graph, condition: Var, seg: Var) -> Result<FeaturePyramid> {
        let x = g.concat_channels(condition, seg)?;
        let (w, b) = (g.constant(self.weight.clone()), g.constant(self.bias.clone()));
        let f = g.conv2d(x, w, b, ConvSpec::square(2, 1, 0))?;
        Ok(FeaturePyramid { layers: vec![f] })
    }
}

#[test]
fn toy_extractor_matches_hand_computation() {
    let mut toy = ToyExtractor {
        weight: Tensor::new(
            vec![2, 2, 2, 2],
            vec![1., 0., 0., 1., 1., 1., 1., 1., 0., 1., 0., 0., 2., 0., 0., -1.],
        )
        .unwrap(),
        bias: Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(),
    };
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap());
    let y = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![1., -1., -1., 1.]).unwrap());
    let p = g.variable(Tensor::new(vec![1, 1, 2, 2], vec![0.5, 0., 0., 1.]).unwrap());
    let l = mfm_loss(&mut g, x, y, p, &mut toy, DEFAULT_SMOOTH).unwrap();
    // features: truth (5, 4), prediction (6.5, 3)
    assert!((value(&g, l) as f64 - 0.07345730184301313).abs() < 1e-6);
    g.backward(l).unwrap();
    assert!(g.grad(p).is_some());
}
