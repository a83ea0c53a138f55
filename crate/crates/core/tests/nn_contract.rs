//! Behavioural contracts of the network engine and training loop.

use imbaclass_core::dataset::LabeledDataset;
use imbaclass_core::img::Image;
use imbaclass_core::losses::LossConfig;
use imbaclass_core::nn::{
    self, adam_step, AdamState, LayerSpec, Network, NetworkSpec, TrainConfig,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image {
    let data: Vec<f32> = (0..side * side)
        .map(|_| rng.gen_range(0.0f32..255.0))
        .collect();
    Image::new(side, side, 1, data).unwrap()
}

#[test]
fn zeroed_residual_body_is_identity() {
    let spec = NetworkSpec {
        input: (1, 8, 8),
        classes: 2,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Residual {
                body: vec![
                    LayerSpec::Conv {
                        out_channels: 3,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                    LayerSpec::ChannelAffine,
                    LayerSpec::Relu,
                    LayerSpec::Conv {
                        out_channels: 3,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                ],
            },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: 2 },
        ],
    };
    let net = Network::new(spec.clone()).unwrap();
    let mut params = net.init_params(5);
    // zero the body's final conv: f(x) = 0, so block output = x and the
    // logits must equal those of the same network without the block
    for name in ["1.res.3.conv.weight", "1.res.3.conv.bias"] {
        params.by_name_mut(name).unwrap().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&mut rng, 8);
    let with_block = nn::forward(&net, &params, std::slice::from_ref(&img)).unwrap();

    let plain_spec = NetworkSpec {
        input: (1, 8, 8),
        classes: 2,
        layers: vec![
            spec.layers[0].clone(),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: 2 },
        ],
    };
    let plain = Network::new(plain_spec).unwrap();
    // copy stem and head parameters across (same entry shapes, same names
    // modulo index), so both nets compute the same function
    let mut plain_params = plain.init_params(5);
    plain_params
        .by_name_mut("0.conv.weight")
        .unwrap()
        .copy_from_slice(params.by_name("0.conv.weight").unwrap());
    plain_params
        .by_name_mut("0.conv.bias")
        .unwrap()
        .copy_from_slice(params.by_name("0.conv.bias").unwrap());
    plain_params
        .by_name_mut("2.linear.weight")
        .unwrap()
        .copy_from_slice(params.by_name("3.linear.weight").unwrap());
    plain_params
        .by_name_mut("2.linear.bias")
        .unwrap()
        .copy_from_slice(params.by_name("3.linear.bias").unwrap());
    let without_block = nn::forward(&plain, &plain_params, std::slice::from_ref(&img)).unwrap();

    for (a, b) in with_block.data().iter().zip(without_block.data()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn dense_block_grows_channels_by_layers_times_growth() {
    for (c0, layers, growth) in [(4, 4, 8), (8, 2, 3), (1, 6, 2)] {
        let spec = NetworkSpec {
            input: (1, 8, 8),
            classes: 2,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: c0,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::DenseBlock {
                    layers,
                    growth,
                    kernel: 3,
                },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear { out: 2 },
            ],
        };
        let net = Network::new(spec).unwrap();
        let head = net
            .init_params(0)
            .entries()
            .iter()
            .find(|e| e.name.ends_with("linear.weight"))
            .unwrap()
            .shape
            .clone();
        assert_eq!(head, vec![2, c0 + layers * growth]);
    }
}

#[test]
fn identical_images_get_identical_logits() {
    let net = Network::new(nn::mini_res((1, 32, 32), 3)).unwrap();
    let params = net.init_params(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng, 32);
    let logits = nn::forward(&net, &params, &[img.clone(), img]).unwrap();
    assert_eq!(logits.row(0), logits.row(1));
}

#[test]
fn predict_rows_are_simplex_and_uniform_on_equal_logits() {
    // a fresh head with zero weights produces equal logits -> uniform rows
    let net = Network::new(NetworkSpec {
        input: (1, 8, 8),
        classes: 4,
        layers: vec![LayerSpec::GlobalAvgPool, LayerSpec::Linear { out: 4 }],
    })
    .unwrap();
    let mut params = net.init_params(0);
    params.by_name_mut("1.linear.weight").unwrap().fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = LabeledDataset::new(
        vec![random_image(&mut rng, 8), random_image(&mut rng, 8)],
        vec![0, 2],
        4,
    )
    .unwrap();
    let batch = nn::predict(&net, &params, &data).unwrap();
    for i in 0..batch.len() {
        for &p in batch.probabilities().row(i) {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicated_sample_keeps_mean_gradient() {
    let net = Network::new(nn::mini_res((1, 16, 16), 3)).unwrap();
    let params = net.init_params(7);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_image(&mut rng, 16);
    let loss = LossConfig::cross_entropy();
    let single = nn::backward(&net, &params, &[img.clone()], &[1], &loss).unwrap();
    let double = nn::backward(&net, &params, &[img.clone(), img], &[1, 1], &loss).unwrap();
    for (a, b) in single.values().iter().zip(double.values()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn adam_runs_are_bit_identical() {
    let net = Network::new(nn::mini_res((1, 16, 16), 3)).unwrap();
    let cfg = TrainConfig::default();
    let run = |seed: u64| {
        let mut params = net.init_params(seed);
        let mut state = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let grads: Vec<f64> = (0..params.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        params.values().to_vec()
    };
    assert_eq!(run(17), run(17));
}

fn separable_two_class_set(n_per_class: usize) -> LabeledDataset {
    // class 0: dark images, class 1: bright images
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_per_class {
        images.push(Image::constant(8, 8, 40.0 + i as f32).unwrap());
        labels.push(0);
        images.push(Image::constant(8, 8, 200.0 + i as f32).unwrap());
        labels.push(1);
    }
    LabeledDataset::new(images, labels, 2).unwrap()
}

fn tiny_net() -> Network {
    Network::new(NetworkSpec {
        input: (1, 8, 8),
        classes: 2,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: 2 },
        ],
    })
    .unwrap()
}

#[test]
fn training_fits_a_separable_toy_set() {
    let data = separable_two_class_set(8);
    let net = tiny_net();
    let cfg = TrainConfig {
        batch_size: 4,
        max_epochs: 50,
        learning_rate: 0.01,
        seed: 1,
        ..TrainConfig::default()
    };
    let (params, history) = nn::train(&net, &data, &cfg, 50).unwrap();
    assert_eq!(history.len(), 50);
    let batch = nn::predict(&net, &params, &data).unwrap();
    let mut correct = 0;
    for i in 0..batch.len() {
        let row = batch.probabilities().row(i);
        let argmax = if row[1] > row[0] { 1 } else { 0 };
        if argmax == batch.labels()[i] {
            correct += 1;
        }
    }
    assert_eq!(correct, data.len(), "training accuracy below 1.0");
    // convergence smoke test: final loss is small
    assert!(*history.last().unwrap() < 0.05, "{:?}", history.last());
}

#[test]
fn stop_epoch_zero_returns_init_params_and_empty_history() {
    let data = separable_two_class_set(2);
    let net = tiny_net();
    let cfg = TrainConfig {
        seed: 9,
        ..TrainConfig::default()
    };
    let (params, history) = nn::train(&net, &data, &cfg, 0).unwrap();
    assert!(history.is_empty());
    let seed = imbaclass_core::seed::child_seed(9, "init", 0);
    assert_eq!(params.values(), net.init_params(seed).values());
}

#[test]
fn same_seed_gives_identical_histories() {
    let data = separable_two_class_set(4);
    let net = tiny_net();
    let cfg = TrainConfig {
        batch_size: 4,
        seed: 21,
        ..TrainConfig::default()
    };
    let (_, h1) = nn::train(&net, &data, &cfg, 5).unwrap();
    let (_, h2) = nn::train(&net, &data, &cfg, 5).unwrap();
    assert_eq!(h1, h2);
}

#[test]
fn training_rejects_bad_inputs() {
    let net = tiny_net();
    let cfg = TrainConfig::default();
    let empty = LabeledDataset::empty(2);
    assert!(nn::train(&net, &empty, &cfg, 1).is_err());

    let data = separable_two_class_set(2);
    assert!(nn::train(&net, &data, &cfg, cfg.max_epochs + 1).is_err());

    // image size mismatch
    let bad = LabeledDataset::new(vec![Image::constant(9, 9, 0.0).unwrap()], vec![0], 2).unwrap();
    assert!(nn::train(&net, &bad, &cfg, 1).is_err());
}
