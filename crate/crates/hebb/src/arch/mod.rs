//! Declarative network construction and the drivers for the two training
//! phases: an unsupervised plasticity pass over the convolutional stack,
//! then frozen feature extraction for the supervised head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hebbian::{kaiming_uniform_init, HebbianConvLayer, HebbianLayerConfig, LearningRule};
use crate::tensor::{
    batchnorm_forward, pool_forward, triangle_activation, BatchNormState, ConvGeometry, PoolKind,
    StackLayer, Tensor4,
};

mod build;
mod residual;

pub use build::{build_depthwise_journe, build_journe, build_lagani, build_residual_journe};
pub use residual::ResidualBlock;

/// One declarative block of a network; shapes are computable without
/// instantiating any weights.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerBlock {
    BatchNorm {
        channels: usize,
    },
    HebbianConv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        /// Cosine response is part of the architecture for some variants.
        cosine: bool,
        /// Index of the learning stage this conv belongs to.
        stage: usize,
    },
    HebbianDepthwiseConv {
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        cosine: bool,
        stage: usize,
    },
    Triangle {
        power: f32,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Inverted bottleneck: pointwise expand, depthwise 3x3, pointwise
    /// project, plus a shortcut and an activation after the add.
    Residual {
        in_channels: usize,
        out_channels: usize,
        hidden: usize,
        power: f32,
        stage: usize,
    },
}

impl LayerBlock {
    /// Output (channels, height, width) for a given input shape.
    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let pool_out = |k: usize, s: usize, p: usize| -> Result<(usize, usize)> {
            let g = ConvGeometry::square(c, c, k, s, p);
            g.out_hw(h, w)
        };
        match self {
            LayerBlock::BatchNorm { channels } => {
                if *channels != c {
                    return Err(Error::Dimension(format!(
                        "batchnorm block expects {channels} channels, got {c}"
                    )));
                }
                Ok((c, h, w))
            }
            LayerBlock::HebbianConv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if *in_channels != c {
                    return Err(Error::Dimension(format!(
                        "conv block expects {in_channels} channels, got {c}"
                    )));
                }
                let g = ConvGeometry::square(c, *out_channels, *kernel, *stride, *padding);
                let (oh, ow) = g.out_hw(h, w)?;
                Ok((*out_channels, oh, ow))
            }
            LayerBlock::HebbianDepthwiseConv {
                channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if *channels != c {
                    return Err(Error::Dimension(format!(
                        "depthwise block expects {channels} channels, got {c}"
                    )));
                }
                let g = ConvGeometry::square(c, c, *kernel, *stride, *padding);
                let (oh, ow) = g.out_hw(h, w)?;
                Ok((c, oh, ow))
            }
            LayerBlock::Triangle { .. } => Ok((c, h, w)),
            LayerBlock::MaxPool { kernel, stride, padding } | LayerBlock::AvgPool { kernel, stride, padding } => {
                let (oh, ow) = pool_out(*kernel, *stride, *padding)?;
                Ok((c, oh, ow))
            }
            LayerBlock::Residual {
                in_channels,
                out_channels,
                ..
            } => {
                if *in_channels != c {
                    return Err(Error::Dimension(format!(
                        "residual block expects {in_channels} channels, got {c}"
                    )));
                }
                Ok((*out_channels, h, w))
            }
        }
    }

    /// Number of learnable weights held by this block.
    pub fn param_count(&self) -> usize {
        match self {
            LayerBlock::HebbianConv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel,
            LayerBlock::HebbianDepthwiseConv { channels, kernel, .. } => channels * kernel * kernel,
            LayerBlock::Residual {
                in_channels,
                out_channels,
                hidden,
                ..
            } => {
                let main = hidden * in_channels + hidden * 9 + out_channels * hidden;
                let shortcut = if in_channels != out_channels {
                    out_channels * in_channels
                } else {
                    0
                };
                main + shortcut
            }
            _ => 0,
        }
    }
}

/// Ordered blocks plus the input/output contract of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    /// Square input height/width the feature dimension is quoted for.
    pub input_size: usize,
    pub blocks: Vec<LayerBlock>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Propagate shapes through every block for a given input size.
    pub fn shapes_for(&self, h: usize, w: usize) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = Vec::with_capacity(self.blocks.len());
        let (mut c, mut hh, mut ww) = (self.input_channels, h, w);
        for block in &self.blocks {
            let s = block.output_shape(c, hh, ww)?;
            shapes.push(s);
            (c, hh, ww) = s;
        }
        Ok(shapes)
    }

    /// Final (channels, height, width) at the declared input size.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        Ok(*self
            .shapes_for(self.input_size, self.input_size)?
            .last()
            .ok_or_else(|| Error::Parameter("network has no blocks".into()))?)
    }

    /// Flattened feature length at the declared input size.
    pub fn feature_dim(&self) -> Result<usize> {
        let (c, h, w) = self.feature_shape()?;
        Ok(c * h * w)
    }

    /// Number of distinct learning stages (per-stage configs attach here).
    pub fn stage_count(&self) -> usize {
        let mut max_stage = None;
        for b in &self.blocks {
            let s = match b {
                LayerBlock::HebbianConv { stage, .. }
                | LayerBlock::HebbianDepthwiseConv { stage, .. }
                | LayerBlock::Residual { stage, .. } => Some(*stage),
                _ => None,
            };
            if let Some(s) = s {
                max_stage = Some(max_stage.map_or(s, |m: usize| m.max(s)));
            }
        }
        max_stage.map_or(0, |m| m + 1)
    }

    /// Learnable weights in the convolutional stack.
    pub fn conv_param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count()).sum()
    }

    /// Convolutional stack plus the linear head (weights and biases).
    pub fn param_count_with_head(&self) -> Result<usize> {
        Ok(self.conv_param_count() + self.feature_dim()? * self.num_classes + self.num_classes)
    }

    /// Divide every internal channel count by `div` (input channels and
    /// class count are untouched); widths must divide evenly.
    pub fn scale_width(&self, div: usize) -> Result<NetworkSpec> {
        if div == 0 {
            return Err(Error::Parameter("width divisor must be positive".into()));
        }
        if div == 1 {
            return Ok(self.clone());
        }
        let shrink = |n: usize, what: &str| -> Result<usize> {
            if n % div != 0 {
                return Err(Error::Parameter(format!(
                    "{what} width {n} is not divisible by {div}"
                )));
            }
            Ok(n / div)
        };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            blocks.push(match b {
                LayerBlock::BatchNorm { channels } => LayerBlock::BatchNorm {
                    channels: if *channels == self.input_channels {
                        *channels
                    } else {
                        shrink(*channels, "batchnorm")?
                    },
                },
                LayerBlock::HebbianConv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => LayerBlock::HebbianConv {
                    in_channels: if *in_channels == self.input_channels {
                        *in_channels
                    } else {
                        shrink(*in_channels, "conv input")?
                    },
                    out_channels: shrink(*out_channels, "conv output")?,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    cosine: *cosine,
                    stage: *stage,
                },
                LayerBlock::HebbianDepthwiseConv {
                    channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => LayerBlock::HebbianDepthwiseConv {
                    channels: shrink(*channels, "depthwise")?,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    cosine: *cosine,
                    stage: *stage,
                },
                LayerBlock::Residual {
                    in_channels,
                    out_channels,
                    hidden,
                    power,
                    stage,
                } => LayerBlock::Residual {
                    in_channels: shrink(*in_channels, "residual input")?,
                    out_channels: shrink(*out_channels, "residual output")?,
                    hidden: shrink(*hidden, "residual hidden")?,
                    power: *power,
                    stage: *stage,
                },
                other => other.clone(),
            });
        }
        Ok(NetworkSpec {
            name: format!("{}/{div}", self.name),
            input_channels: self.input_channels,
            input_size: self.input_size,
            blocks,
            num_classes: self.num_classes,
        })
    }

    /// Render as a structured text document, one line per block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "network {}\ninput {}x{}x{}\nclasses {}\n",
            self.name, self.input_channels, self.input_size, self.input_size, self.num_classes
        ));
        for b in &self.blocks {
            let line = match b {
                LayerBlock::BatchNorm { channels } => format!("batchnorm channels={channels}"),
                LayerBlock::HebbianConv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => format!(
                    "conv in={in_channels} out={out_channels} kernel={kernel} stride={stride} padding={padding} cosine={cosine} stage={stage}"
                ),
                LayerBlock::HebbianDepthwiseConv {
                    channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => format!(
                    "depthwise channels={channels} kernel={kernel} stride={stride} padding={padding} cosine={cosine} stage={stage}"
                ),
                LayerBlock::Triangle { power } => format!("triangle power={power}"),
                LayerBlock::MaxPool { kernel, stride, padding } => {
                    format!("maxpool kernel={kernel} stride={stride} padding={padding}")
                }
                LayerBlock::AvgPool { kernel, stride, padding } => {
                    format!("avgpool kernel={kernel} stride={stride} padding={padding}")
                }
                LayerBlock::Residual {
                    in_channels,
                    out_channels,
                    hidden,
                    power,
                    stage,
                } => format!(
                    "residual in={in_channels} out={out_channels} hidden={hidden} power={power} stage={stage}"
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Instantiate a plain feed-forward stack with fan-in uniform weights
    /// for the gradient-descent reference model. Residual blocks are not
    /// representable in the flat stack.
    pub fn build_stack<R: Rng>(&self, rng: &mut R) -> Result<Vec<StackLayer<f32>>> {
        let mut layers = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            layers.push(match b {
                LayerBlock::BatchNorm { channels } => StackLayer::BatchNorm {
                    state: BatchNormState::new(*channels),
                    batch_stats: true,
                },
                LayerBlock::HebbianConv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let geom = ConvGeometry::square(*in_channels, *out_channels, *kernel, *stride, *padding);
                    StackLayer::Conv {
                        weights: kaiming_uniform_init(*out_channels, *in_channels, *kernel, *kernel, rng),
                        geom,
                    }
                }
                LayerBlock::HebbianDepthwiseConv {
                    channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => StackLayer::DepthwiseConv {
                    weights: kaiming_uniform_init(*channels, 1, *kernel, *kernel, rng),
                    stride: *stride,
                    padding: *padding,
                },
                LayerBlock::Triangle { power } => StackLayer::Triangle { power: *power },
                LayerBlock::MaxPool { kernel, stride, padding } => StackLayer::Pool {
                    kind: PoolKind::Max,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                LayerBlock::AvgPool { kernel, stride, padding } => StackLayer::Pool {
                    kind: PoolKind::Avg,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                LayerBlock::Residual { .. } => {
                    return Err(Error::Capability(
                        "residual blocks are not supported in the gradient-descent stack".into(),
                    ))
                }
            });
        }
        Ok(layers)
    }
}

/// Instantiated counterpart of one [`LayerBlock`].
#[derive(Debug, Clone)]
pub enum NetLayer {
    BatchNorm(BatchNormState<f32>),
    Hebbian(HebbianConvLayer),
    Triangle(f32),
    Pool {
        kind: PoolKind,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Residual(ResidualBlock),
}

/// A fully instantiated network: the spec plus per-layer state.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<NetLayer>,
}

impl Network {
    /// Instantiate a spec. `configs` carries one learning configuration
    /// per stage, or a single configuration shared by every stage.
    pub fn new<R: Rng>(spec: &NetworkSpec, configs: &[HebbianLayerConfig], rng: &mut R) -> Result<Self> {
        let stages = spec.stage_count();
        if configs.len() != 1 && configs.len() != stages {
            return Err(Error::Parameter(format!(
                "{} layer configurations for {stages} learning stages",
                configs.len()
            )));
        }
        let config_for = |stage: usize| -> &HebbianLayerConfig {
            if configs.len() == 1 {
                &configs[0]
            } else {
                &configs[stage]
            }
        };
        let mut layers = Vec::with_capacity(spec.blocks.len());
        for block in &spec.blocks {
            layers.push(match block {
                LayerBlock::BatchNorm { channels } => NetLayer::BatchNorm(BatchNormState::new(*channels)),
                LayerBlock::HebbianConv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => {
                    let mut cfg = config_for(*stage).clone();
                    cfg.cosine = cfg.cosine || *cosine;
                    let geom = ConvGeometry::square(*in_channels, *out_channels, *kernel, *stride, *padding);
                    NetLayer::Hebbian(HebbianConvLayer::new(geom, cfg, rng)?)
                }
                LayerBlock::HebbianDepthwiseConv {
                    channels,
                    kernel,
                    stride,
                    padding,
                    cosine,
                    stage,
                } => {
                    let mut cfg = config_for(*stage).clone();
                    cfg.cosine = cfg.cosine || *cosine;
                    // a depthwise site competes against itself only, so the
                    // soft rule and cross-channel extras are stripped
                    if cfg.rule == LearningRule::SoftHebb {
                        return Err(Error::Capability(
                            "the soft-competition rule cannot drive a depthwise stage".into(),
                        ));
                    }
                    cfg.homeostatic_k = None;
                    NetLayer::Hebbian(HebbianConvLayer::new_depthwise(
                        *channels, *kernel, *stride, *padding, cfg, rng,
                    )?)
                }
                LayerBlock::Triangle { power } => NetLayer::Triangle(*power),
                LayerBlock::MaxPool { kernel, stride, padding } => NetLayer::Pool {
                    kind: PoolKind::Max,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                LayerBlock::AvgPool { kernel, stride, padding } => NetLayer::Pool {
                    kind: PoolKind::Avg,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                LayerBlock::Residual {
                    in_channels,
                    out_channels,
                    hidden,
                    power,
                    stage,
                } => NetLayer::Residual(ResidualBlock::new(
                    *in_channels,
                    *out_channels,
                    *hidden,
                    *power,
                    config_for(*stage).clone(),
                    rng,
                )?),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// One learning pass over a batch: every self-organizing layer updates
    /// its weights from the previous layer's competitive output, and batch
    /// normalization advances its running statistics.
    pub fn hebbian_batch(&mut self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = match layer {
                NetLayer::BatchNorm(state) => {
                    let (y, next) = batchnorm_forward(&cur, state, true)?;
                    *state = next;
                    y
                }
                NetLayer::Hebbian(l) => l.hebbian_step(&cur)?,
                NetLayer::Triangle(p) => triangle_activation(&cur, *p),
                NetLayer::Pool {
                    kind,
                    kernel,
                    stride,
                    padding,
                } => pool_forward(&cur, *kind, *kernel, *stride, *padding)?,
                NetLayer::Residual(b) => b.learn_step(&cur)?,
            };
        }
        Ok(cur)
    }

    /// Deterministic frozen pass; no state is mutated.
    pub fn forward_features(&self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                NetLayer::BatchNorm(state) => batchnorm_forward(&cur, state, false)?.0,
                NetLayer::Hebbian(l) => l.forward(&cur)?,
                NetLayer::Triangle(p) => triangle_activation(&cur, *p),
                NetLayer::Pool {
                    kind,
                    kernel,
                    stride,
                    padding,
                } => pool_forward(&cur, *kind, *kernel, *stride, *padding)?,
                NetLayer::Residual(b) => b.forward(&cur)?,
            };
        }
        Ok(cur)
    }

    /// Set every learning rate to zero so subsequent steps cannot move
    /// any weight.
    pub fn freeze(&mut self) {
        for layer in &mut self.layers {
            match layer {
                NetLayer::Hebbian(l) => l.config.eta = 0.0,
                NetLayer::Residual(b) => b.freeze(),
                _ => {}
            }
        }
    }

    /// All convolutional filter banks in forward order (residual blocks
    /// contribute their sub-layers in execution order).
    pub fn weight_banks(&self) -> Vec<&Tensor4<f32>> {
        let mut banks = Vec::new();
        for layer in &self.layers {
            match layer {
                NetLayer::Hebbian(l) => banks.push(&l.weights),
                NetLayer::Residual(b) => banks.extend(b.weight_banks()),
                _ => {}
            }
        }
        banks
    }

    pub fn weight_banks_mut(&mut self) -> Vec<&mut Tensor4<f32>> {
        let mut banks = Vec::new();
        for layer in &mut self.layers {
            match layer {
                NetLayer::Hebbian(l) => banks.push(&mut l.weights),
                NetLayer::Residual(b) => banks.extend(b.weight_banks_mut()),
                _ => {}
            }
        }
        banks
    }
}

/// One full unsupervised pass: feed every batch through
/// [`Network::hebbian_batch`], then freeze the network.
pub fn hebbian_epoch<I>(net: &mut Network, batches: I) -> Result<()>
where
    I: IntoIterator<Item = Tensor4<f32>>,
{
    for batch in batches {
        net.hebbian_batch(&batch)?;
    }
    net.freeze();
    Ok(())
}

#[cfg(test)]
mod tests;
