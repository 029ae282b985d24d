//! Inverted-bottleneck residual block built from self-organizing
//! sub-layers: pointwise expand, depthwise 3x3, pointwise project, with a
//! pointwise shortcut when the channel counts differ, an elementwise add,
//! and a Triangle activation on the sum.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hebbian::{HebbianConvLayer, HebbianLayerConfig, LearningRule};
use crate::tensor::{batchnorm_forward, triangle_activation, BatchNormState, ConvGeometry, Tensor4};

#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub bn_in: BatchNormState<f32>,
    pub expand: HebbianConvLayer,
    pub bn_mid: BatchNormState<f32>,
    pub depthwise: HebbianConvLayer,
    pub bn_out: BatchNormState<f32>,
    pub project: HebbianConvLayer,
    pub shortcut: Option<(BatchNormState<f32>, HebbianConvLayer)>,
    pub power: f32,
}

impl ResidualBlock {
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        hidden: usize,
        power: f32,
        config: HebbianLayerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.rule == LearningRule::SoftHebb {
            return Err(Error::Capability(
                "the soft-competition rule cannot drive a residual block's depthwise stage".into(),
            ));
        }
        // every sub-layer responds with cosine similarity
        let mut cfg = config;
        cfg.cosine = true;
        let mut dw_cfg = cfg.clone();
        dw_cfg.homeostatic_k = None;

        let pointwise = |ic: usize, oc: usize| ConvGeometry::square(ic, oc, 1, 1, 0);
        let expand = HebbianConvLayer::new(pointwise(in_channels, hidden), cfg.clone(), rng)?;
        let depthwise = HebbianConvLayer::new_depthwise(hidden, 3, 1, 1, dw_cfg, rng)?;
        let project = HebbianConvLayer::new(pointwise(hidden, out_channels), cfg.clone(), rng)?;
        let shortcut = if in_channels != out_channels {
            Some((
                BatchNormState::new(in_channels),
                HebbianConvLayer::new(pointwise(in_channels, out_channels), cfg, rng)?,
            ))
        } else {
            None
        };
        Ok(Self {
            bn_in: BatchNormState::new(in_channels),
            expand,
            bn_mid: BatchNormState::new(hidden),
            depthwise,
            bn_out: BatchNormState::new(hidden),
            project,
            shortcut,
            power,
        })
    }

    fn combine(&self, main: &Tensor4<f32>, short: &Tensor4<f32>) -> Tensor4<f32> {
        let mut sum = main.clone();
        sum.add_scaled(short, 1.0);
        triangle_activation(&sum, self.power)
    }

    /// Frozen evaluation pass.
    pub fn forward(&self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let t = batchnorm_forward(x, &self.bn_in, false)?.0;
        let t = self.expand.forward(&t)?;
        let t = triangle_activation(&t, self.power);
        let t = batchnorm_forward(&t, &self.bn_mid, false)?.0;
        let t = self.depthwise.forward(&t)?;
        let t = triangle_activation(&t, self.power);
        let t = batchnorm_forward(&t, &self.bn_out, false)?.0;
        let main = self.project.forward(&t)?;
        let short = match &self.shortcut {
            Some((bn, conv)) => {
                let s = batchnorm_forward(x, bn, false)?.0;
                conv.forward(&s)?
            }
            None => x.clone(),
        };
        Ok(self.combine(&main, &short))
    }

    /// Learning pass: each sub-layer updates in the order it executes, and
    /// batch statistics advance the running normalizer state.
    pub fn learn_step(&mut self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let (t, bn) = batchnorm_forward(x, &self.bn_in, true)?;
        self.bn_in = bn;
        let t = self.expand.hebbian_step(&t)?;
        let t = triangle_activation(&t, self.power);
        let (t, bn) = batchnorm_forward(&t, &self.bn_mid, true)?;
        self.bn_mid = bn;
        let t = self.depthwise.hebbian_step(&t)?;
        let t = triangle_activation(&t, self.power);
        let (t, bn) = batchnorm_forward(&t, &self.bn_out, true)?;
        self.bn_out = bn;
        let main = self.project.hebbian_step(&t)?;
        let short = match &mut self.shortcut {
            Some((bn, conv)) => {
                let (s, next) = batchnorm_forward(x, bn, true)?;
                *bn = next;
                conv.hebbian_step(&s)?
            }
            None => x.clone(),
        };
        Ok(self.combine(&main, &short))
    }

    pub fn freeze(&mut self) {
        self.expand.config.eta = 0.0;
        self.depthwise.config.eta = 0.0;
        self.project.config.eta = 0.0;
        if let Some((_, conv)) = &mut self.shortcut {
            conv.config.eta = 0.0;
        }
    }

    /// Sub-layer filter banks in execution order (shortcut last).
    pub fn weight_banks(&self) -> Vec<&Tensor4<f32>> {
        let mut banks = vec![&self.expand.weights, &self.depthwise.weights, &self.project.weights];
        if let Some((_, conv)) = &self.shortcut {
            banks.push(&conv.weights);
        }
        banks
    }

    pub fn weight_banks_mut(&mut self) -> Vec<&mut Tensor4<f32>> {
        let mut banks = vec![
            &mut self.expand.weights,
            &mut self.depthwise.weights,
            &mut self.project.weights,
        ];
        if let Some((_, conv)) = &mut self.shortcut {
            banks.push(&mut conv.weights);
        }
        banks
    }
}
