use odcs_core::nn::{ExtractorConfig, FeatureExtractor, Generator, GeneratorConfig, INIT_STD};
use odcs_core::{ConvSpec, Graph, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(size: usize, scale: f64) -> GeneratorConfig {
    GeneratorConfig {
        input_size: size,
        width_scale: scale,
        ..GeneratorConfig::default()
    }
}

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>, amp: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-amp..amp))
}

fn conv_size(input: usize, spec: &ConvSpec) -> usize {
    (input + 2 * spec.padding[0] - spec.kernel[0]) / spec.stride[0] + 1
}

fn transpose_size(input: usize, spec: &ConvSpec) -> usize {
    (input - 1) * spec.stride[0] + spec.kernel[0] + spec.output_padding[0] - 2 * spec.padding[0]
}

#[test]
fn layout_matches_size_formulas() {
    for (size, scale) in [(64, 0.125), (64, 1.0), (256, 0.125), (256, 1.0)] {
        let layout = config(size, scale).layout().unwrap();
        let mut s = size;
        for block in &layout.encoder {
            assert_eq!(block.in_size, s);
            assert_eq!(block.out_size, conv_size(s, &block.spec), "{}", block.name);
            s = block.out_size;
        }
        for (j, block) in layout.decoder.iter().enumerate() {
            assert_eq!(block.in_size, s);
            assert_eq!(block.out_size, transpose_size(s, &block.spec), "{}", block.name);
            let mirror = &layout.encoder[layout.encoder.len() - 1 - j];
            assert_eq!(block.out_size, mirror.in_size);
            s = block.out_size;
        }
        assert_eq!(s, size);
    }
    let full = config(256, 1.0).layout().unwrap();
    let expected: Vec<(usize, usize)> = vec![
        (32, 128),
        (64, 64),
        (128, 32),
        (256, 16),
        (256, 8),
        (256, 4),
        (256, 2),
        (256, 1),
    ];
    let got: Vec<(usize, usize)> = full.encoder.iter().map(|b| (b.out_channels, b.out_size)).collect();
    assert_eq!(got, expected);
    assert_eq!(full.bottleneck_size(), 1);
    let dec: Vec<(usize, usize, usize)> = full
        .decoder
        .iter()
        .map(|b| (b.in_channels, b.out_channels, b.out_size))
        .collect();
    assert_eq!(
        dec,
        vec![
            (256, 256, 2),
            (512, 256, 4),
            (512, 256, 8),
            (512, 256, 16),
            (512, 128, 32),
            (256, 64, 64),
            (128, 32, 128),
            (64, 1, 256)
        ]
    );
}

#[test]
fn forward_shapes_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (size, scale, n) in [(64, 0.125, 2), (64, 1.0, 2), (256, 0.125, 2)] {
        let mut gen = Generator::new(config(size, scale)).unwrap();
        let x = random(&mut rng, vec![n, 3, size, size], 1.0);
        for mode in [Mode::Train, Mode::Eval] {
            let y = gen.predict(x.clone(), mode).unwrap();
            assert_eq!(y.shape(), &[n, 1, size, size]);
            assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
    let mut gen = Generator::new(config(64, 0.125)).unwrap();
    let huge = random(&mut rng, vec![2, 3, 64, 64], 1e4);
    let y = gen.predict(huge, Mode::Train).unwrap();
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn full_size_forward() {
    let mut gen = Generator::new(GeneratorConfig::default()).unwrap();
    let x = random(&mut ChaCha8Rng::seed_from_u64(2), vec![2, 3, 256, 256], 1.0);
    let y = gen.predict(x, Mode::Train).unwrap();
    assert_eq!(y.shape(), &[2, 1, 256, 256]);
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn initialization_statistics() {
    let a = Generator::new(GeneratorConfig::default()).unwrap();
    let b = Generator::new(GeneratorConfig::default()).unwrap();
    assert_eq!(a.params(), b.params());
    let w = &a.params().by_name("enc2.weight").unwrap().value;
    assert!(w.numel() >= 10_000);
    let n = w.numel() as f64;
    let mean = w.sum() / n;
    assert!(mean.abs() < 3.0 * INIT_STD / n.sqrt(), "mean {mean}");
    let sd = (w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((sd - INIT_STD).abs() < 0.05 * INIT_STD, "sd {sd}");
    for p in a.params().iter() {
        let data = p.value.data();
        if p.name.ends_with("gamma") {
            assert!(data.iter().all(|&v| v == 1.0), "{}", p.name);
        } else if p.name.ends_with("beta") || p.name.ends_with("bias") {
            assert!(data.iter().all(|&v| v == 0.0), "{}", p.name);
        }
    }
    assert!(a.params().by_name("enc1.bn.gamma").is_none());
    assert!(a.params().by_name("dec8.bn.gamma").is_none());
    let other = Generator::new(GeneratorConfig {
        init_seed: 1,
        ..GeneratorConfig::default()
    })
    .unwrap();
    assert_ne!(a.params(), other.params());
}

#[test]
fn parameter_counts() {
    // Summed per block from the channel table: weights, bias, batch-norm scale and shift.
    assert_eq!(
        Generator::new(GeneratorConfig::default()).unwrap().params().numel(),
        13_609_473
    );
    assert_eq!(
        FeatureExtractor::new(ExtractorConfig::default())
            .unwrap()
            .params()
            .numel(),
        691_616
    );
}

#[test]
fn skips_carry_signal_with_decoder_path_zeroed() {
    let cfg = config(64, 0.125);
    let mut gen = Generator::new(cfg).unwrap();
    let layout = gen.layout().clone();
    for j in 1..layout.decoder.len() {
        let prev_channels = layout.decoder[j - 1].out_channels;
        let w = &mut gen
            .params_mut()
            .by_name_mut(&format!("dec{}.weight", j + 1))
            .unwrap()
            .value;
        let per_input = w.numel() / w.shape()[0];
        w.data_mut()[..prev_channels * per_input].fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&mut rng, vec![2, 3, 64, 64], 1.0);
    let b = random(&mut rng, vec![2, 3, 64, 64], 1.0);
    let ya = gen.predict(a.clone(), Mode::Eval).unwrap();
    let yb = gen.predict(b.clone(), Mode::Eval).unwrap();
    assert_ne!(ya, yb);

    // Zeroing the skip halves too leaves an input-independent output.
    for j in 1..layout.decoder.len() {
        let w = &mut gen
            .params_mut()
            .by_name_mut(&format!("dec{}.weight", j + 1))
            .unwrap()
            .value;
        w.data_mut().fill(0.0);
    }
    assert_eq!(gen.predict(a, Mode::Eval).unwrap(), gen.predict(b, Mode::Eval).unwrap());
}

#[test]
fn extractor_pyramid_at_full_size() {
    let mut fx = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, vec![1, 3, 256, 256], 1.0);
    let y = random(&mut rng, vec![1, 1, 256, 256], 1.0);
    let mut shapes = Vec::new();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut g = Graph::new();
        let vars = fx.params().bind(&mut g);
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let pyramid = fx.extract(&mut g, &vars, xv, yv, Mode::Eval).unwrap();
        shapes = pyramid.layers.iter().map(|&l| g.shape(l).to_vec()).collect();
        runs.push(pyramid.layers.iter().map(|&l| g.value(l).clone()).collect::<Vec<_>>());
    }
    assert_eq!(
        shapes,
        vec![
            vec![1, 32, 128, 128],
            vec![1, 64, 64, 64],
            vec![1, 128, 32, 32],
            vec![1, 256, 31, 31]
        ]
    );
    assert_eq!(runs[0], runs[1]);
}
