//! Network specifications and their compilation into an executable plan.
//!
//! [`NetworkSpec`] is the declarative description (serialisable, used in
//! checkpoints and experiment plans); [`Network`] is the validated, compiled
//! form with resolved shapes and parameter slots.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{Init, ParamEntry, ParameterSet};

/// One layer in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Per-channel learnable scale and bias (normalisation-free affine).
    ChannelAffine,
    Relu,
    MaxPool {
        window: usize,
    },
    GlobalAvgPool,
    /// Fully connected layer over the flattened input; must be the final
    /// layer and produce the class count.
    Linear {
        out: usize,
    },
    /// Computes body(x) + x, with a learned 1x1 projection on the skip path
    /// when the body changes the channel count. The body must preserve the
    /// spatial size.
    Residual {
        body: Vec<LayerSpec>,
    },
    /// Each sub-layer applies affine -> relu -> conv(growth) to the
    /// concatenation of the block input and all previous sub-layer outputs;
    /// output channels grow by `growth` per layer.
    DenseBlock {
        layers: usize,
        growth: usize,
        kernel: usize,
    },
}

/// Input shape (channels, height, width), class count, and layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: (usize, usize, usize),
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

pub(crate) type Shape = (usize, usize, usize);

/// Compiled layer with resolved shapes and parameter entry indices.
#[derive(Debug, Clone)]
pub(crate) enum PlanNode {
    Conv {
        w: usize,
        b: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        out_shape: Shape,
    },
    Affine {
        scale: usize,
        bias: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        in_shape: Shape,
        out_shape: Shape,
    },
    GlobalAvgPool {
        in_shape: Shape,
    },
    Linear {
        w: usize,
        b: usize,
        in_shape: Shape,
        out: usize,
    },
    Residual {
        /// 1x1 projection weight entry when the body changes channels.
        proj: Option<usize>,
        body: Vec<PlanNode>,
        in_shape: Shape,
        out_shape: Shape,
    },
    DenseBlock {
        subs: Vec<DenseSub>,
        in_shape: Shape,
        growth: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct DenseSub {
    pub scale: usize,
    pub bias: usize,
    pub conv_w: usize,
    pub conv_b: usize,
    /// Channels of the concatenated input to this sub-layer.
    pub in_channels: usize,
    pub kernel: usize,
}

/// A validated network: spec plus compiled plan and parameter layout.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    pub(crate) plan: Vec<PlanNode>,
    entries: Arc<Vec<ParamEntry>>,
    inits: Vec<Init>,
}

struct Builder {
    entries: Vec<ParamEntry>,
    inits: Vec<Init>,
    offset: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let len = shape.iter().product();
        self.entries.push(ParamEntry {
            name,
            shape,
            offset: self.offset,
            len,
        });
        self.inits.push(init);
        self.offset += len;
        self.entries.len() - 1
    }
}

impl Network {
    /// Validate a spec and compile it. Rejects shape-incompatible stacks,
    /// networks without a final linear head, and layers declared after the
    /// head (which could never receive gradient).
    pub fn new(spec: NetworkSpec) -> Result<Network> {
        let (c, h, w) = spec.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("input shape must be non-zero"));
        }
        if spec.classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if spec.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        let mut builder = Builder {
            entries: Vec::new(),
            inits: Vec::new(),
            offset: 0,
        };
        let (plan, out_shape, saw_linear) =
            compile_layers(&spec.layers, spec.input, "", &mut builder, true)?;
        if !saw_linear {
            return Err(Error::invalid("network must end with a linear head"));
        }
        if out_shape != (spec.classes, 1, 1) {
            return Err(Error::invalid(format!(
                "head produces {} outputs, expected {} classes",
                out_shape.0, spec.classes
            )));
        }
        Ok(Network {
            spec,
            plan,
            entries: Arc::new(builder.entries),
            inits: builder.inits,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.iter().map(|e| e.len).sum()
    }

    /// Freshly initialised parameters (seeded, declaration order).
    pub fn init_params(&self, seed: u64) -> ParameterSet {
        ParameterSet::init(Arc::clone(&self.entries), &self.inits, seed)
    }

    /// Parameters from a flat payload in declaration order.
    pub fn params_from_flat(&self, data: Vec<f64>) -> Result<ParameterSet> {
        ParameterSet::with_data(Arc::clone(&self.entries), data)
    }

    pub(crate) fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let expected: usize = self.entries.iter().map(|e| e.len).sum();
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "parameter set has {} values, network needs {expected}",
                params.len()
            )));
        }
        Ok(())
    }
}

fn conv_out_dim(in_dim: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if in_dim + 2 * padding < kernel {
        return Err(Error::invalid(format!(
            "kernel {kernel} larger than padded input {in_dim}+2*{padding}"
        )));
    }
    Ok((in_dim + 2 * padding - kernel) / stride + 1)
}

/// Compile a layer slice; returns (plan, output shape, saw-final-linear).
/// `top_level` controls whether a Linear head is permitted here.
fn compile_layers(
    layers: &[LayerSpec],
    input: Shape,
    prefix: &str,
    builder: &mut Builder,
    top_level: bool,
) -> Result<(Vec<PlanNode>, Shape, bool)> {
    let mut shape = input;
    let mut plan = Vec::with_capacity(layers.len());
    let mut saw_linear = false;
    for (idx, layer) in layers.iter().enumerate() {
        if saw_linear {
            return Err(Error::invalid(format!(
                "layer {prefix}{idx} is declared after the linear head and would never \
                 receive gradient"
            )));
        }
        let name = |part: &str| format!("{prefix}{idx}.{part}");
        match layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = shape;
                if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                    return Err(Error::invalid(format!(
                        "conv {prefix}{idx}: channels, kernel and stride must be positive"
                    )));
                }
                let oh = conv_out_dim(h, *kernel, *stride, *padding)?;
                let ow = conv_out_dim(w, *kernel, *stride, *padding)?;
                let fan_in = c * kernel * kernel;
                let w_idx = builder.push(
                    name("conv.weight"),
                    vec![*out_channels, c, *kernel, *kernel],
                    Init::HeUniform { fan_in },
                );
                let b_idx = builder.push(name("conv.bias"), vec![*out_channels], Init::Zero);
                let out_shape = (*out_channels, oh, ow);
                plan.push(PlanNode::Conv {
                    w: w_idx,
                    b: b_idx,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    out_shape,
                });
                shape = out_shape;
            }
            LayerSpec::ChannelAffine => {
                let scale = builder.push(name("affine.scale"), vec![shape.0], Init::One);
                let bias = builder.push(name("affine.bias"), vec![shape.0], Init::Zero);
                plan.push(PlanNode::Affine { scale, bias });
            }
            LayerSpec::Relu => plan.push(PlanNode::Relu),
            LayerSpec::MaxPool { window } => {
                let (c, h, w) = shape;
                if *window == 0 || h < *window || w < *window {
                    return Err(Error::invalid(format!(
                        "maxpool {prefix}{idx}: window {window} does not fit {h}x{w}"
                    )));
                }
                let out_shape = (c, h / *window, w / *window);
                plan.push(PlanNode::MaxPool {
                    window: *window,
                    in_shape: shape,
                    out_shape,
                });
                shape = out_shape;
            }
            LayerSpec::GlobalAvgPool => {
                plan.push(PlanNode::GlobalAvgPool { in_shape: shape });
                shape = (shape.0, 1, 1);
            }
            LayerSpec::Linear { out } => {
                if !top_level {
                    return Err(Error::invalid(
                        "linear head is only allowed at the top level",
                    ));
                }
                if *out == 0 {
                    return Err(Error::invalid("linear output size must be positive"));
                }
                let in_len = shape.0 * shape.1 * shape.2;
                let w_idx = builder.push(
                    name("linear.weight"),
                    vec![*out, in_len],
                    Init::HeUniform { fan_in: in_len },
                );
                let b_idx = builder.push(name("linear.bias"), vec![*out], Init::Zero);
                plan.push(PlanNode::Linear {
                    w: w_idx,
                    b: b_idx,
                    in_shape: shape,
                    out: *out,
                });
                shape = (*out, 1, 1);
                saw_linear = true;
            }
            LayerSpec::Residual { body } => {
                if body.is_empty() {
                    return Err(Error::invalid("residual body must not be empty"));
                }
                let sub_prefix = format!("{prefix}{idx}.res.");
                let (body_plan, body_shape, body_linear) =
                    compile_layers(body, shape, &sub_prefix, builder, false)?;
                if body_linear {
                    return Err(Error::invalid("residual body cannot contain the head"));
                }
                if (body_shape.1, body_shape.2) != (shape.1, shape.2) {
                    return Err(Error::invalid(format!(
                        "residual {prefix}{idx}: body changes spatial size \
                         {}x{} -> {}x{}",
                        shape.1, shape.2, body_shape.1, body_shape.2
                    )));
                }
                let proj = if body_shape.0 != shape.0 {
                    Some(builder.push(
                        format!("{prefix}{idx}.res.proj.weight"),
                        vec![body_shape.0, shape.0],
                        Init::HeUniform { fan_in: shape.0 },
                    ))
                } else {
                    None
                };
                plan.push(PlanNode::Residual {
                    proj,
                    body: body_plan,
                    in_shape: shape,
                    out_shape: body_shape,
                });
                shape = body_shape;
            }
            LayerSpec::DenseBlock {
                layers: n_layers,
                growth,
                kernel,
            } => {
                if *n_layers == 0 || *growth == 0 {
                    return Err(Error::invalid("dense block needs layers >= 1, growth >= 1"));
                }
                if kernel % 2 == 0 {
                    return Err(Error::invalid(
                        "dense block kernel must be odd to preserve spatial size",
                    ));
                }
                let (c0, h, w) = shape;
                if h + (kernel - 1) < *kernel || w + (kernel - 1) < *kernel {
                    return Err(Error::invalid("dense block kernel larger than input"));
                }
                let mut subs = Vec::with_capacity(*n_layers);
                for l in 0..*n_layers {
                    let in_channels = c0 + l * growth;
                    let scale = builder.push(
                        format!("{prefix}{idx}.dense.l{l}.affine.scale"),
                        vec![in_channels],
                        Init::One,
                    );
                    let bias = builder.push(
                        format!("{prefix}{idx}.dense.l{l}.affine.bias"),
                        vec![in_channels],
                        Init::Zero,
                    );
                    let conv_w = builder.push(
                        format!("{prefix}{idx}.dense.l{l}.conv.weight"),
                        vec![*growth, in_channels, *kernel, *kernel],
                        Init::HeUniform {
                            fan_in: in_channels * kernel * kernel,
                        },
                    );
                    let conv_b = builder.push(
                        format!("{prefix}{idx}.dense.l{l}.conv.bias"),
                        vec![*growth],
                        Init::Zero,
                    );
                    subs.push(DenseSub {
                        scale,
                        bias,
                        conv_w,
                        conv_b,
                        in_channels,
                        kernel: *kernel,
                    });
                }
                plan.push(PlanNode::DenseBlock {
                    subs,
                    in_shape: shape,
                    growth: *growth,
                });
                shape = (c0 + n_layers * growth, h, w);
            }
        }
    }
    Ok((plan, shape, saw_linear))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(classes: usize) -> LayerSpec {
        LayerSpec::Linear { out: classes }
    }

    #[test]
    fn rejects_layers_after_head() {
        let spec = NetworkSpec {
            input: (1, 8, 8),
            classes: 2,
            layers: vec![LayerSpec::GlobalAvgPool, head(2), LayerSpec::Relu],
        };
        let err = Network::new(spec).unwrap_err();
        assert!(err.to_string().contains("after the linear head"));
    }

    #[test]
    fn rejects_missing_head() {
        let spec = NetworkSpec {
            input: (1, 8, 8),
            classes: 2,
            layers: vec![LayerSpec::GlobalAvgPool],
        };
        assert!(Network::new(spec).is_err());
    }

    #[test]
    fn rejects_spatially_shrinking_residual_body() {
        let spec = NetworkSpec {
            input: (1, 8, 8),
            classes: 2,
            layers: vec![
                LayerSpec::Residual {
                    body: vec![LayerSpec::MaxPool { window: 2 }],
                },
                LayerSpec::GlobalAvgPool,
                head(2),
            ],
        };
        assert!(Network::new(spec).is_err());
    }

    #[test]
    fn dense_block_channel_arithmetic() {
        let spec = NetworkSpec {
            input: (5, 8, 8),
            classes: 3,
            layers: vec![
                LayerSpec::DenseBlock {
                    layers: 4,
                    growth: 8,
                    kernel: 3,
                },
                LayerSpec::GlobalAvgPool,
                head(3),
            ],
        };
        let net = Network::new(spec).unwrap();
        // head input is 5 + 4*8 = 37 channels
        let linear_w = net
            .entries
            .iter()
            .find(|e| e.name.ends_with("linear.weight"))
            .unwrap();
        assert_eq!(linear_w.shape, vec![3, 37]);
    }

    #[test]
    fn residual_gets_projection_only_on_channel_change() {
        let matched = NetworkSpec {
            input: (4, 8, 8),
            classes: 2,
            layers: vec![
                LayerSpec::Residual {
                    body: vec![LayerSpec::Conv {
                        out_channels: 4,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    }],
                },
                LayerSpec::GlobalAvgPool,
                head(2),
            ],
        };
        let net = Network::new(matched).unwrap();
        assert!(net.entries.iter().all(|e| !e.name.contains("proj")));

        let changed = NetworkSpec {
            input: (4, 8, 8),
            classes: 2,
            layers: vec![
                LayerSpec::Residual {
                    body: vec![LayerSpec::Conv {
                        out_channels: 6,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    }],
                },
                LayerSpec::GlobalAvgPool,
                head(2),
            ],
        };
        let net = Network::new(changed).unwrap();
        assert!(net.entries.iter().any(|e| e.name.contains("proj")));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = NetworkSpec {
            input: (1, 32, 32),
            classes: 3,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 8,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::ChannelAffine,
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                head(3),
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
