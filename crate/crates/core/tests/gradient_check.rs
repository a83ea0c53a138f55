//! Finite-difference oracles for the analytic gradients.
//!
//! The oracle only ever calls the forward paths (softmax + pointwise loss,
//! or the network forward pass); it never touches the analytic backward
//! code it is checking.

use imbaclass_core::img::Image;
use imbaclass_core::losses::{self, LossConfig};
use imbaclass_core::mat::Matrix;
use imbaclass_core::nn::{self, LayerSpec, Network, NetworkSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean batch loss as a pure function of the logits.
fn loss_of_logits(logits: &Matrix, labels: &[usize], cfg: &LossConfig) -> f64 {
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let probs = losses::softmax_row(logits.row(i));
        let (alpha, gamma) = match cfg.family {
            losses::LossFamily::CrossEntropy => (1.0, 0.0),
            losses::LossFamily::Focal => (cfg.alpha, cfg.gamma),
        };
        total += losses::pointwise_loss(probs[label], alpha, gamma, cfg.epsilon);
    }
    total / labels.len() as f64
}

/// Relative error between two gradient vectors (norm ratio).
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[test]
fn loss_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-5;
    let classes = 5;
    for draw in 0..120 {
        let batch = rng.gen_range(1..4usize);
        let rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..classes).map(|_| rng.gen_range(-4.0..4.0)).collect())
            .collect();
        let logits = Matrix::from_rows(&rows);
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let cfg = match draw % 3 {
            0 => LossConfig::cross_entropy(),
            1 => LossConfig::focal(1.0, 0.0),
            _ => LossConfig::focal(rng.gen_range(0.25..1.75), rng.gen_range(0.5..4.0)),
        };

        let analytic = losses::loss_gradient(&logits, &labels, &cfg).unwrap();
        let mut numeric = Matrix::zeros(batch, classes);
        for r in 0..batch {
            for c in 0..classes {
                let mut plus = logits.clone();
                plus.row_mut(r)[c] += h;
                let mut minus = logits.clone();
                minus.row_mut(r)[c] -= h;
                numeric.row_mut(r)[c] = (loss_of_logits(&plus, &labels, &cfg)
                    - loss_of_logits(&minus, &labels, &cfg))
                    / (2.0 * h);
            }
        }
        let err = rel_error(analytic.data(), numeric.data());
        assert!(err < 1e-5, "draw {draw}: relative error {err}");
    }
}

/// Micro network exercising every layer kind and every convolution code
/// path (strided stem, same-size 3x3, pointwise 1x1), including a
/// channel-changing residual (with projection) and a dense block. Under 2k
/// parameters.
fn micro_net() -> Network {
    Network::new(NetworkSpec {
        input: (1, 16, 16),
        classes: 2,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::ChannelAffine,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Residual {
                body: vec![
                    LayerSpec::Conv {
                        out_channels: 6,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                    LayerSpec::ChannelAffine,
                    LayerSpec::Relu,
                    LayerSpec::Conv {
                        out_channels: 6,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                ],
            },
            LayerSpec::Relu,
            LayerSpec::DenseBlock {
                layers: 2,
                growth: 3,
                kernel: 3,
            },
            LayerSpec::Conv {
                out_channels: 5,
                kernel: 1,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: 2 },
        ],
    })
    .unwrap()
}

fn random_images(rng: &mut ChaCha8Rng, n: usize, side: usize) -> Vec<Image> {
    (0..n)
        .map(|_| {
            let data: Vec<f32> = (0..side * side)
                .map(|_| rng.gen_range(0.0f32..255.0))
                .collect();
            Image::new(side, side, 1, data).unwrap()
        })
        .collect()
}

#[test]
fn network_backward_matches_central_differences() {
    let net = micro_net();
    assert!(net.num_parameters() <= 2000, "{}", net.num_parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let images = random_images(&mut rng, 3, 16);
    let labels = vec![0usize, 1, 0];
    let h = 1e-4;

    for loss in [LossConfig::cross_entropy(), LossConfig::focal(1.5, 2.0)] {
        let mut params = net.init_params(11);
        // Evaluate at a generic point: structured init values (zero biases,
        // unit scales) park ReLU pre-activations exactly on their kink,
        // where central differences measure the slope midpoint instead of
        // either one-sided derivative.
        let mut jitter = ChaCha8Rng::seed_from_u64(23);
        for v in params.values_mut() {
            *v += jitter.gen_range(-0.05..0.05);
        }
        let analytic = nn::backward(&net, &params, &images, &labels, &loss).unwrap();

        let eval = |net: &Network, params: &nn::ParameterSet| -> f64 {
            let logits = nn::forward(net, params, &images).unwrap();
            loss_of_logits(&logits, &labels, &loss)
        };
        let mut numeric = vec![0.0f64; params.len()];
        for i in 0..params.len() {
            let orig = params.values()[i];
            params.values_mut()[i] = orig + h;
            let up = eval(&net, &params);
            params.values_mut()[i] = orig - h;
            let down = eval(&net, &params);
            params.values_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * h);
        }
        let err = rel_error(analytic.values(), &numeric);
        assert!(err < 1e-3, "loss {loss:?}: relative error {err}");
    }
}

// Odd shapes and even kernels fall back to the generic convolution loops;
// check those against the oracle too.
#[test]
fn generic_convolution_path_matches_central_differences() {
    let net = Network::new(NetworkSpec {
        input: (1, 7, 7),
        classes: 2,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 2,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Conv {
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 0,
            },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: 2 },
        ],
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let images = random_images(&mut rng, 2, 7);
    let labels = vec![1usize, 0];
    let loss = LossConfig::cross_entropy();
    let mut params = net.init_params(19);
    let mut jitter = ChaCha8Rng::seed_from_u64(29);
    for v in params.values_mut() {
        *v += jitter.gen_range(-0.05..0.05);
    }
    let analytic = nn::backward(&net, &params, &images, &labels, &loss).unwrap();
    let h = 1e-4;
    let mut numeric = vec![0.0f64; params.len()];
    for i in 0..params.len() {
        let orig = params.values()[i];
        params.values_mut()[i] = orig + h;
        let logits = nn::forward(&net, &params, &images).unwrap();
        let up = loss_of_logits(&logits, &labels, &loss);
        params.values_mut()[i] = orig - h;
        let logits = nn::forward(&net, &params, &images).unwrap();
        let down = loss_of_logits(&logits, &labels, &loss);
        params.values_mut()[i] = orig;
        numeric[i] = (up - down) / (2.0 * h);
    }
    let err = rel_error(analytic.values(), &numeric);
    assert!(err < 1e-3, "relative error {err}");
}
