//! A frozen feed-forward stack of primitive layers with hand-written
//! adjoints. This is the machinery behind receptive-field gradient ascent
//! and the end-to-end gradient-descent comparison model; it is not a
//! general autodiff system.

use super::{
    batchnorm::channel_stats, conv2d_forward, conv2d_input_grad, correlate_filters,
    depthwise_correlate, depthwise_forward, depthwise_input_grad, pool_backward, pool_forward,
    triangle_activation, triangle_backward, BatchNormState, ConvGeometry, Element, PoolKind,
    Tensor4,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum StackLayer<T = f32> {
    Conv {
        weights: Tensor4<T>,
        geom: ConvGeometry,
    },
    DepthwiseConv {
        weights: Tensor4<T>,
        stride: usize,
        padding: usize,
    },
    Pool {
        kind: PoolKind,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Batch normalization. With `batch_stats` the statistics come from the
    /// current batch (the training path of the gradient-descent model);
    /// otherwise the frozen running statistics are used.
    BatchNorm {
        state: BatchNormState<T>,
        batch_stats: bool,
    },
    Triangle {
        power: T,
    },
}

/// Per-layer weight gradients produced by [`backward`]; `None` for layers
/// without weights.
pub type LayerGrads<T> = Vec<Option<Tensor4<T>>>;

impl<T: Element> StackLayer<T> {
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        match self {
            StackLayer::Conv { weights, geom } => conv2d_forward(x, weights, geom),
            StackLayer::DepthwiseConv {
                weights,
                stride,
                padding,
            } => depthwise_forward(x, weights, *stride, *padding),
            StackLayer::Pool {
                kind,
                kernel,
                stride,
                padding,
            } => pool_forward(x, *kind, *kernel, *stride, *padding),
            StackLayer::BatchNorm { state, batch_stats } => {
                if *batch_stats {
                    let (out, _) = super::batchnorm_forward(x, state, true)?;
                    Ok(out)
                } else {
                    let (out, _) = super::batchnorm_forward(x, state, false)?;
                    Ok(out)
                }
            }
            StackLayer::Triangle { power } => Ok(triangle_activation(x, *power)),
        }
    }

    /// Gradient with respect to the layer input, plus the weight gradient
    /// where the layer has weights.
    fn backward(&self, gy: &Tensor4<T>, x: &Tensor4<T>) -> Result<(Tensor4<T>, Option<Tensor4<T>>)> {
        match self {
            StackLayer::Conv { weights, geom } => {
                let gx = conv2d_input_grad(gy, weights, geom, x.height(), x.width())?;
                let gw = correlate_filters(gy, x, geom)?;
                Ok((gx, Some(gw)))
            }
            StackLayer::DepthwiseConv {
                weights,
                stride,
                padding,
            } => {
                let (_, _, kh, kw) = weights.shape();
                let gx = depthwise_input_grad(gy, weights, *stride, *padding, x.height(), x.width())?;
                let gw = depthwise_correlate(gy, x, kh, kw, *stride, *padding)?;
                Ok((gx, Some(gw)))
            }
            StackLayer::Pool {
                kind,
                kernel,
                stride,
                padding,
            } => Ok((pool_backward(gy, x, *kind, *kernel, *stride, *padding)?, None)),
            StackLayer::BatchNorm { state, batch_stats } => {
                let (n, c, h, w) = x.shape();
                let count = T::from_usize(n * h * w);
                let (mean, var) = if *batch_stats {
                    channel_stats(x)
                } else {
                    (state.running_mean.clone(), state.running_var.clone())
                };
                let mut gx = Tensor4::zeros(n, c, h, w);
                if !*batch_stats {
                    for ch in 0..c {
                        let inv = (var[ch] + state.eps).sqrt().recip();
                        for b in 0..n {
                            for y in 0..h {
                                for xx in 0..w {
                                    *gx.at_mut(b, ch, y, xx) = gy.at(b, ch, y, xx) * inv;
                                }
                            }
                        }
                    }
                } else {
                    // full batch-statistics backward:
                    // gx = inv * (gy - mean(gy) - xhat * mean(gy * xhat))
                    for ch in 0..c {
                        let inv = (var[ch] + state.eps).sqrt().recip();
                        let mut gsum = T::zero();
                        let mut gdot = T::zero();
                        for b in 0..n {
                            for y in 0..h {
                                for xx in 0..w {
                                    let xhat = (x.at(b, ch, y, xx) - mean[ch]) * inv;
                                    gsum = gsum + gy.at(b, ch, y, xx);
                                    gdot = gdot + gy.at(b, ch, y, xx) * xhat;
                                }
                            }
                        }
                        let gmean = gsum / count;
                        let gdot_mean = gdot / count;
                        for b in 0..n {
                            for y in 0..h {
                                for xx in 0..w {
                                    let xhat = (x.at(b, ch, y, xx) - mean[ch]) * inv;
                                    *gx.at_mut(b, ch, y, xx) =
                                        (gy.at(b, ch, y, xx) - gmean - xhat * gdot_mean) * inv;
                                }
                            }
                        }
                    }
                }
                Ok((gx, None))
            }
            StackLayer::Triangle { power } => Ok((triangle_backward(gy, x, *power), None)),
        }
    }
}

/// Run the stack, returning the input to each layer plus the final output.
pub fn forward_cached<T: Element>(layers: &[StackLayer<T>], x: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for layer in layers {
        let next = layer.forward(acts.last().unwrap())?;
        acts.push(next);
    }
    Ok(acts)
}

pub fn forward<T: Element>(layers: &[StackLayer<T>], x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut cur = x.clone();
    for layer in layers {
        cur = layer.forward(&cur)?;
    }
    Ok(cur)
}

/// Backpropagate `gy_final` through the stack, returning the input
/// gradient and per-layer weight gradients.
pub fn backward<T: Element>(
    layers: &[StackLayer<T>],
    acts: &[Tensor4<T>],
    gy_final: &Tensor4<T>,
) -> Result<(Tensor4<T>, LayerGrads<T>)> {
    if acts.len() != layers.len() + 1 {
        return Err(Error::Dimension("activation cache does not match stack".into()));
    }
    let mut grads: LayerGrads<T> = vec![None; layers.len()];
    let mut g = gy_final.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let (gx, gw) = layer.backward(&g, &acts[i])?;
        grads[i] = gw;
        g = gx;
    }
    Ok((g, grads))
}

/// Gradient of A with respect to the input image, where A is the spatial
/// (and batch) mean of `channel`'s activation at the top of the stack.
pub fn conv_stack_input_gradient<T: Element>(
    layers: &[StackLayer<T>],
    x: &Tensor4<T>,
    channel: usize,
) -> Result<Tensor4<T>> {
    let acts = forward_cached(layers, x)?;
    let top = acts.last().unwrap();
    let (n, c, h, w) = top.shape();
    if channel >= c {
        return Err(Error::Parameter(format!(
            "objective channel {channel} out of range for {c} channels"
        )));
    }
    let seed_val = T::from_usize(n * h * w).recip();
    let mut seed = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                *seed.at_mut(b, channel, y, xx) = seed_val;
            }
        }
    }
    let (gx, _) = backward(layers, &acts, &seed)?;
    Ok(gx)
}

/// Objective value matching [`conv_stack_input_gradient`]: mean activation
/// of `channel` at the top of the stack.
pub fn stack_objective<T: Element>(layers: &[StackLayer<T>], x: &Tensor4<T>, channel: usize) -> Result<T> {
    let top = forward(layers, x)?;
    let (n, _, h, w) = top.shape();
    let mut acc = T::zero();
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                acc = acc + top.at(b, channel, y, xx);
            }
        }
    }
    Ok(acc / T::from_usize(n * h * w))
}
