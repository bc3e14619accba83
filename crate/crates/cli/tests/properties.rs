use std::path::PathBuf;

use odcs::checkpoint::{Checkpoint, NamedTensor, OptimizerState, RngState};
use odcs::TrainConfig;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = TrainConfig> {
    (
        (1e-6f64..1.0, 0.0f64..0.99, 0.0f64..0.9999, 1usize..16, 1u64..50),
        (
            0.0f64..500.0,
            prop::sample::select(vec![0.125, 0.25, 0.5, 1.0]),
            prop::sample::select(vec![32usize, 64, 128]),
        ),
        (
            any::<u64>(),
            any::<bool>(),
            any::<bool>(),
            prop::option::of((0.5f64..1.0, 1.0f64..1.5)),
        ),
        (any::<bool>(), any::<bool>(), "[a-z][a-z0-9_/]{0,12}"),
    )
        .prop_map(
            |(
                (lr, beta1, beta2, batch_size, epochs),
                (lambda, width_scale, input_size),
                (seed, augment, hflip, scale_range),
                (extractor_trainable, refresh_statistics, dir),
            )| TrainConfig {
                lr,
                beta1,
                beta2,
                batch_size,
                epochs,
                lambda,
                width_scale,
                input_size,
                seed,
                augment,
                hflip,
                scale_range,
                extractor_trainable,
                refresh_statistics,
                checkpoint_dir: PathBuf::from(dir),
                ..TrainConfig::default()
            },
        )
}

fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    let tensor = ("[a-z.]{1,10}", prop::collection::vec(1usize..4, 0..3)).prop_flat_map(|(name, dims)| {
        let n = dims.iter().product::<usize>();
        prop::collection::vec(any::<f32>(), n).prop_map(move |data| NamedTensor {
            name: name.clone(),
            dims: dims.clone(),
            data,
        })
    });
    let optimizer = (
        "[a-z]{1,4}",
        any::<u64>(),
        prop::collection::vec(prop::collection::vec(any::<f64>(), 0..4), 0..3),
    )
        .prop_map(|(name, step, m)| OptimizerState {
            name,
            step,
            v: m.iter().map(|b| b.iter().map(|x| x * 0.5).collect()).collect(),
            m,
        });
    (
        ".{0,40}",
        any::<u64>(),
        any::<u64>(),
        any::<[u8; 32]>(),
        any::<u64>(),
        any::<u128>(),
        prop::collection::vec(tensor, 0..4),
        prop::collection::vec(optimizer, 0..3),
    )
        .prop_map(
            |(config_text, epoch, step, seed, stream, word_pos, tensors, optimizers)| Checkpoint {
                config_text,
                epoch,
                step,
                rng: RngState { seed, stream, word_pos },
                tensors,
                optimizers,
            },
        )
}

proptest! {
    #[test]
    fn config_text_round_trips(cfg in config()) {
        let parsed = TrainConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.to_text(), cfg.to_text());
    }

    #[test]
    fn checkpoint_bytes_round_trip(ckpt in checkpoint()) {
        let bytes = ckpt.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn corrupted_checkpoints_error_instead_of_panicking(
        ckpt in checkpoint(),
        flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6),
        cut in any::<prop::sample::Index>(),
    ) {
        let mut bytes = ckpt.encode();
        for (at, value) in flips {
            let i = at.index(bytes.len());
            bytes[i] = value;
        }
        let _ = Checkpoint::decode(&bytes);
        let _ = Checkpoint::decode(&bytes[..cut.index(bytes.len())]);
    }

    #[test]
    fn arbitrary_config_text_never_panics(text in "(\\PC|\n|=|#){0,80}") {
        let _ = TrainConfig::parse(&text);
    }
}
