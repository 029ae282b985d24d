//! Competition mechanisms: hard/soft winner-takes-all, temporal and
//! homeostatic update gates, pre-synaptic competition, and lateral
//! inhibition through a difference-of-Gaussians kernel.

use std::collections::VecDeque;
use std::f32::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{conv2d_forward, ConvGeometry, Tensor4};

/// Binary mask that selects, at each (batch, h, w) site, the channel with
/// the maximum activation. Ties go to the lowest channel index.
pub fn hard_wta_mask(y: &Tensor4<f32>) -> Tensor4<f32> {
    let (n, c, h, w) = y.shape();
    let mut mask = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let mut best = y.at(b, 0, yy, xx);
                let mut winner = 0;
                for ch in 1..c {
                    let v = y.at(b, ch, yy, xx);
                    if v > best {
                        best = v;
                        winner = ch;
                    }
                }
                *mask.at_mut(b, winner, yy, xx) = 1.0;
            }
        }
    }
    mask
}

/// Per-site softmax over channels of `inv_temp * u`, stabilized by max
/// subtraction. Channel sums are 1 at every site.
pub fn soft_wta_activation(u: &Tensor4<f32>, inv_temp: f32) -> Tensor4<f32> {
    let (n, c, h, w) = u.shape();
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..w {
                let mut m = f32::NEG_INFINITY;
                for ch in 0..c {
                    m = m.max(inv_temp * u.at(b, ch, yy, xx));
                }
                let mut z = 0.0;
                for ch in 0..c {
                    let e = (inv_temp * u.at(b, ch, yy, xx) - m).exp();
                    *out.at_mut(b, ch, yy, xx) = e;
                    z += e;
                }
                for ch in 0..c {
                    *out.at_mut(b, ch, yy, xx) /= z;
                }
            }
        }
    }
    out
}

/// Per-output-channel ring buffers of recent activation summaries; the
/// running median gates future updates.
#[derive(Debug, Clone)]
pub struct TemporalHistory {
    buffers: Vec<VecDeque<f32>>,
    capacity: usize,
}

impl TemporalHistory {
    pub fn new(channels: usize, capacity: usize) -> Self {
        Self {
            buffers: vec![VecDeque::new(); channels],
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self, channel: usize) -> usize {
        self.buffers[channel].len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.iter().all(|b| b.is_empty())
    }

    fn median(buf: &VecDeque<f32>) -> f32 {
        let mut v: Vec<f32> = buf.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// Gate one step: compare each channel's activation summary against the
    /// median of its history, then append it. Empty buffers grant
    /// permission so that cold starts can learn.
    pub fn gate(&mut self, activation: &[f32]) -> Vec<bool> {
        assert_eq!(activation.len(), self.buffers.len());
        let mut permit = Vec::with_capacity(activation.len());
        for (ch, &a) in activation.iter().enumerate() {
            let buf = &mut self.buffers[ch];
            let p = buf.is_empty() || a > Self::median(buf);
            permit.push(p);
            buf.push_back(a);
            while buf.len() > self.capacity {
                buf.pop_front();
            }
        }
        permit
    }
}

/// Homeostatic similarity threshold: mean + k * std of the normalized
/// weight/input similarity scores.
pub fn homeostatic_threshold(
    x: &Tensor4<f32>,
    weights: &Tensor4<f32>,
    geom: &ConvGeometry,
    k: f32,
) -> Result<f32> {
    let sims = similarity_map(x, weights, geom)?;
    let n = sims.len() as f32;
    let mean = sims.data().iter().sum::<f32>() / n;
    let var = sims.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    Ok(mean + k * var.sqrt())
}

/// Weight/input similarity at each site: the response of the per-filter
/// L2-normalized weight bank.
pub fn similarity_map(
    x: &Tensor4<f32>,
    weights: &Tensor4<f32>,
    geom: &ConvGeometry,
) -> Result<Tensor4<f32>> {
    let (oc, _, _, _) = weights.shape();
    let k_len = geom.patch_len();
    let mut scaled = weights.clone();
    for f in 0..oc {
        let row = &mut scaled.data_mut()[f * k_len..(f + 1) * k_len];
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt() + 1e-10;
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    conv2d_forward(x, &scaled, geom)
}

/// Homeostatic gate: per-site permission mask allowing updates only where
/// the similarity strictly exceeds mean + k * std of all similarities.
pub fn homeostatic_gate(
    x: &Tensor4<f32>,
    weights: &Tensor4<f32>,
    geom: &ConvGeometry,
    k: f32,
) -> Result<Tensor4<f32>> {
    let sims = similarity_map(x, weights, geom)?;
    let n = sims.len() as f32;
    let mean = sims.data().iter().sum::<f32>() / n;
    let var = sims.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let theta = mean + k * var.sqrt();
    Ok(sims.map(|s| if s > theta { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresynapticMode {
    Linear,
    Softmax,
    L2,
}

/// Pre-synaptic competition: inverse weight magnitudes normalized across
/// the input-channel dimension at each (out-channel, kh, kw) position.
pub fn presynaptic_weights(w: &Tensor4<f32>, mode: PresynapticMode) -> Tensor4<f32> {
    const EPS: f32 = 1e-6;
    let (oc, ic, kh, kw) = w.shape();
    let mut out = Tensor4::zeros(oc, ic, kh, kw);
    for f in 0..oc {
        for i in 0..kh {
            for j in 0..kw {
                let m: Vec<f32> = (0..ic).map(|ch| 1.0 / (w.at(f, ch, i, j).abs() + EPS)).collect();
                match mode {
                    PresynapticMode::Linear => {
                        let z = m.iter().sum::<f32>() + EPS;
                        for ch in 0..ic {
                            *out.at_mut(f, ch, i, j) = m[ch] / z;
                        }
                    }
                    PresynapticMode::Softmax => {
                        let mx = m.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                        let e: Vec<f32> = m.iter().map(|v| (v - mx).exp()).collect();
                        let z = e.iter().sum::<f32>();
                        for ch in 0..ic {
                            *out.at_mut(f, ch, i, j) = e[ch] / z;
                        }
                    }
                    PresynapticMode::L2 => {
                        let z = m.iter().map(|v| v * v).sum::<f32>().sqrt();
                        for ch in 0..ic {
                            *out.at_mut(f, ch, i, j) = m[ch] / z;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Center-excitatory, surround-inhibitory lateral kernel.
#[derive(Debug, Clone)]
pub struct LateralKernel {
    pub size: usize,
    pub values: Vec<f32>,
    pub sigma_e: f32,
    pub sigma_i: f32,
    pub k_center: f32,
}

/// Difference-of-Gaussians kernel on the integer grid centered at 0,
/// scaled so the center value equals 1.
pub fn dog_kernel(sigma_e: f32, sigma_i: f32, size: usize) -> Result<LateralKernel> {
    if size % 2 == 0 {
        return Err(Error::Parameter(format!("lateral kernel size {size} must be odd")));
    }
    if !(sigma_i > sigma_e && sigma_e > 0.0) {
        return Err(Error::Parameter(format!(
            "need sigma_i > sigma_e > 0, got sigma_e={sigma_e}, sigma_i={sigma_i}"
        )));
    }
    let half = (size / 2) as isize;
    let raw = |x: f32, y: f32| -> f32 {
        let r2 = x * x + y * y;
        let ge = (-r2 / (2.0 * sigma_e * sigma_e)).exp() / (2.0 * PI * sigma_e * sigma_e);
        let gi = (-r2 / (2.0 * sigma_i * sigma_i)).exp() / (2.0 * PI * sigma_i * sigma_i);
        ge - gi
    };
    let k_center = raw(0.0, 0.0);
    let mut values = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            values.push(raw(x as f32, y as f32) / k_center);
        }
    }
    Ok(LateralKernel {
        size,
        values,
        sigma_e,
        sigma_i,
        k_center,
    })
}

/// Convolve every channel with the shared lateral kernel, same padding.
pub fn apply_lateral_inhibition(y: &Tensor4<f32>, kernel: &LateralKernel) -> Tensor4<f32> {
    let (n, c, h, w) = y.shape();
    let size = kernel.size;
    let half = (size / 2) as isize;
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for i in 0..size {
                        let iy = yy as isize + i as isize - half;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for j in 0..size {
                            let ix = xx as isize + j as isize - half;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += kernel.values[i * size + j] * y.at(b, ch, iy as usize, ix as usize);
                        }
                    }
                    *out.at_mut(b, ch, yy, xx) = acc;
                }
            }
        }
    }
    out
}
