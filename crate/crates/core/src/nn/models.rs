//! The two toy architectures used throughout the experiments.

use crate::error::{Error, Result};
use crate::nn::spec::{LayerSpec, NetworkSpec};

/// Residual toy net: strided stem, two residual blocks at decreasing
/// resolution, global average pooling, linear head.
pub fn mini_res(input: (usize, usize, usize), classes: usize) -> NetworkSpec {
    let res_block = |ch: usize| LayerSpec::Residual {
        body: vec![
            LayerSpec::Conv {
                out_channels: ch,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::ChannelAffine,
            LayerSpec::Relu,
            LayerSpec::Conv {
                out_channels: ch,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::ChannelAffine,
        ],
    };
    NetworkSpec {
        input,
        classes,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 8,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::ChannelAffine,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            res_block(8),
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            res_block(8),
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: classes },
        ],
    }
}

/// Dense toy net: strided stem, one dense block (4 layers, growth 8), a 1x1
/// transition, pooling, global average pooling, linear head.
pub fn mini_dense(input: (usize, usize, usize), classes: usize) -> NetworkSpec {
    NetworkSpec {
        input,
        classes,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 8,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::ChannelAffine,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 4 },
            LayerSpec::DenseBlock {
                layers: 4,
                growth: 8,
                kernel: 3,
            },
            LayerSpec::Conv {
                out_channels: 16,
                kernel: 1,
                stride: 1,
                padding: 0,
            },
            LayerSpec::ChannelAffine,
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Linear { out: classes },
        ],
    }
}

/// Look up a model architecture by its identifier.
pub fn model_by_name(
    name: &str,
    input: (usize, usize, usize),
    classes: usize,
) -> Result<NetworkSpec> {
    match name {
        "mini_res" => Ok(mini_res(input, classes)),
        "mini_dense" => Ok(mini_dense(input, classes)),
        other => Err(Error::invalid(format!(
            "unknown model '{other}' (available: mini_res, mini_dense)"
        ))),
    }
}
