//! Per-channel batch normalization without affine parameters.

use super::{Element, Tensor4};
use crate::error::{Error, Result};

/// Running statistics for one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Element> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            eps: T::from_f64(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Per-channel batch statistics of a tensor: (mean, biased variance).
pub fn channel_stats<T: Element>(x: &Tensor4<T>) -> (Vec<T>, Vec<T>) {
    let (n, c, h, w) = x.shape();
    let count = T::from_usize(n * h * w);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    mean[ch] = mean[ch] + x.at(b, ch, y, xx);
                }
            }
        }
    }
    for m in &mut mean {
        *m = *m / count;
    }
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let d = x.at(b, ch, y, xx) - mean[ch];
                    var[ch] = var[ch] + d * d;
                }
            }
        }
    }
    for v in &mut var {
        *v = *v / count;
    }
    (mean, var)
}

/// Normalize `x` per channel. Training mode uses batch statistics and
/// returns a state with running stats advanced by
/// `new = (1 - momentum) * old + momentum * batch`; eval mode uses the
/// stored running statistics unchanged.
pub fn batchnorm_forward<T: Element>(
    x: &Tensor4<T>,
    state: &BatchNormState<T>,
    training: bool,
) -> Result<(Tensor4<T>, BatchNormState<T>)> {
    let (n, c, h, w) = x.shape();
    if c != state.channels() {
        return Err(Error::Dimension(format!(
            "batchnorm has {} channels, input has {c}",
            state.channels()
        )));
    }
    let (mean, var) = if training {
        channel_stats(x)
    } else {
        (state.running_mean.clone(), state.running_var.clone())
    };
    let mut out = Tensor4::zeros(n, c, h, w);
    for ch in 0..c {
        let inv = (var[ch] + state.eps).sqrt().recip();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    *out.at_mut(b, ch, y, xx) = (x.at(b, ch, y, xx) - mean[ch]) * inv;
                }
            }
        }
    }
    let mut next = state.clone();
    if training {
        let m = state.momentum;
        for ch in 0..c {
            next.running_mean[ch] = (T::one() - m) * state.running_mean[ch] + m * mean[ch];
            next.running_var[ch] = (T::one() - m) * state.running_var[ch] + m * var[ch];
        }
    }
    Ok((out, next))
}
