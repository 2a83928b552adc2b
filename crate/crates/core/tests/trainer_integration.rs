//! Training behavior on the toy task: descent properties, the all-linear
//! degenerate case, and the calibrated accuracy floor.

use evanet_core::genome::{
    sample_random_genome, Genome, LayerKind, LayerSpec, MetaKind, ModuleSpec, SearchConstraints,
    StreamSpec, StreamType,
};
use evanet_core::trainer::{
    build_network, generate_toy_dataset, train, ToyVideoSpec, TrainConfig,
};

fn small_spec(seed: u64) -> ToyVideoSpec {
    ToyVideoSpec {
        frames: 8,
        height: 10,
        width: 10,
        channels: 1,
        num_classes: 8,
        train_samples: 128,
        val_samples: 64,
        test_samples: 64,
        seed,
    }
}

fn desk_constraints() -> SearchConstraints {
    SearchConstraints {
        allowed_temporal_lens: [1, 3, 5].into_iter().collect(),
        max_streams: 3,
        max_repeats: 2,
        ..SearchConstraints::default()
    }
}

#[test]
fn median_loss_drops_from_iteration_1_to_100() {
    let genome = sample_random_genome(MetaKind::Toy, &desk_constraints(), 1);
    let mut first = Vec::new();
    let mut hundredth = Vec::new();
    for seed in 0..10u64 {
        let dataset = generate_toy_dataset(&small_spec(seed)).unwrap();
        let config = TrainConfig {
            iterations: 100,
            batch_size: 8,
            seed,
            eval_every: 100,
            ..TrainConfig::default()
        };
        let network = build_network(&genome, 8, 1, seed).unwrap();
        let (_, history) = train(network, &dataset, &config).unwrap();
        first.push(history[0].loss);
        hundredth.push(history[99].loss);
    }
    first.sort_by(f64::total_cmp);
    hundredth.sort_by(f64::total_cmp);
    let median = |v: &[f64]| (v[4] + v[5]) / 2.0;
    assert!(
        median(&hundredth) < median(&first),
        "median loss at iteration 100 ({:.4}) must undercut iteration 1 ({:.4})",
        median(&hundredth),
        median(&first)
    );
}

/// A genome whose modules contain only pointwise streams: the network is
/// linear apart from stem/pointwise ReLUs, and full-batch gradient descent
/// at a small step must descend monotonically.
fn pointwise_only_genome() -> Genome {
    let pointwise_stream = StreamSpec {
        stream_type: StreamType::T1Only1x1,
        layers: vec![LayerSpec { kind: LayerKind::Conv1x1x1, temporal_len: 1, out_channels: 1 }],
    };
    let mut m1 = ModuleSpec { repeats: 1, total_out_channels: 8, streams: vec![pointwise_stream.clone()] };
    m1.assign_stream_channels();
    let mut m2 = ModuleSpec { repeats: 1, total_out_channels: 16, streams: vec![pointwise_stream] };
    m2.assign_stream_channels();
    Genome {
        meta: MetaKind::Toy,
        channel_scale: MetaKind::Toy.default_channel_scale(),
        stem: vec![LayerSpec { kind: LayerKind::Conv3D, temporal_len: 5, out_channels: 4 }],
        modules: vec![m1, m2],
    }
}

#[test]
fn full_batch_descent_is_strictly_monotone_early() {
    let spec = ToyVideoSpec { train_samples: 32, val_samples: 16, test_samples: 16, ..small_spec(3) };
    let dataset = generate_toy_dataset(&spec).unwrap();
    let genome = pointwise_only_genome();
    let config = TrainConfig {
        iterations: 50,
        batch_size: 32, // full batch: deterministic gradient descent
        learning_rate: 0.005,
        momentum: 0.0,
        seed: 3,
        eval_every: 50,
    };
    let network = build_network(&genome, 8, 1, 3).unwrap();
    let (_, history) = train(network, &dataset, &config).unwrap();
    for w in history.windows(2) {
        assert!(
            w[1].loss < w[0].loss,
            "full-batch loss must strictly decrease: {} -> {} at iteration {}",
            w[0].loss,
            w[1].loss,
            w[1].iteration
        );
    }
}

#[test]
fn calibrated_setup_clears_the_accuracy_floor() {
    // The frozen desk-scale recipe on a known-trainable genome must beat
    // chance + 0.1; this is the floor behind the train() contract.
    let genome = sample_random_genome(MetaKind::Toy, &desk_constraints(), 1);
    let dataset = generate_toy_dataset(&ToyVideoSpec {
        train_samples: 256,
        val_samples: 128,
        test_samples: 128,
        ..small_spec(100)
    })
    .unwrap();
    let config = TrainConfig { iterations: 300, seed: 1, eval_every: 100, ..TrainConfig::default() };
    let network = build_network(&genome, 8, 1, 1).unwrap();
    let (model, _) = train(network, &dataset, &config).unwrap();
    assert!(
        model.val_accuracy > 1.0 / 8.0 + 0.1,
        "calibrated run must clear chance + 0.1, got {}",
        model.val_accuracy
    );
}
