//! Local plasticity rules and their shared update plumbing: instar-style
//! weight movement toward active inputs, a sliding-threshold rule, a
//! soft-competition rule with winner/loser signs, update normalization,
//! sign projection, and weight initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_forward, correlate_filters, depthwise_correlate, depthwise_forward, local_input_norm,
    ConvGeometry, Tensor4,
};

use super::competition::hard_wta_mask;

/// Cosine-similarity response: convolution with L2-normalized filters,
/// divided by the local L2 norm of each input patch.
pub fn cosine_response(x: &Tensor4<f32>, w: &Tensor4<f32>, geom: &ConvGeometry) -> Result<Tensor4<f32>> {
    const EPS: f32 = 1e-8;
    geom.validate_filters(w)?;
    let (oc, _, _, _) = w.shape();
    let k_len = geom.patch_len();
    let mut w_hat = w.clone();
    for f in 0..oc {
        let row = &mut w_hat.data_mut()[f * k_len..(f + 1) * k_len];
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt() + EPS;
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    let mut y = conv2d_forward(x, &w_hat, geom)?;
    let norms = local_input_norm(x, geom, EPS)?;
    let (n, c, oh, ow) = y.shape();
    for b in 0..n {
        for ch in 0..c {
            for yy in 0..oh {
                for xx in 0..ow {
                    *y.at_mut(b, ch, yy, xx) /= norms.at(b, 0, yy, xx);
                }
            }
        }
    }
    Ok(y)
}

/// Cosine-similarity response for a depthwise filter bank: each channel's
/// filter is L2-normalized and each response divided by the local L2 norm
/// of that channel's input window.
pub fn depthwise_cosine_response(
    x: &Tensor4<f32>,
    w: &Tensor4<f32>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<f32>> {
    const EPS: f32 = 1e-8;
    let (c, _, kh, kw) = w.shape();
    let k_len = kh * kw;
    let mut w_hat = w.clone();
    for ch in 0..c {
        let row = &mut w_hat.data_mut()[ch * k_len..(ch + 1) * k_len];
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt() + EPS;
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    let mut y = depthwise_forward(x, &w_hat, stride, padding)?;
    let ones = Tensor4::from_vec(c, 1, kh, kw, vec![1.0; c * k_len]).unwrap();
    let x2 = x.map(|v| v * v);
    let window_sq = depthwise_forward(&x2, &ones, stride, padding)?;
    for (yv, &s) in y.data_mut().iter_mut().zip(window_sq.data()) {
        *yv /= (s + EPS).sqrt();
    }
    Ok(y)
}

/// Instar update: correlate post-synaptic activity with the input and
/// decay each filter by its total activity, moving active filters toward
/// the patches that drove them.
pub fn grossberg_update(
    x: &Tensor4<f32>,
    y: &Tensor4<f32>,
    w: &Tensor4<f32>,
    geom: &ConvGeometry,
) -> Result<Tensor4<f32>> {
    let mut delta = correlate_filters(y, x, geom)?;
    let (n, oc, oh, ow) = y.shape();
    let k_len = geom.patch_len();
    for f in 0..oc {
        let mut total = 0.0f32;
        for b in 0..n {
            for yy in 0..oh {
                for xx in 0..ow {
                    total += y.at(b, f, yy, xx);
                }
            }
        }
        let drow = &mut delta.data_mut()[f * k_len..(f + 1) * k_len];
        let wrow = &w.data()[f * k_len..(f + 1) * k_len];
        for (d, &wv) in drow.iter_mut().zip(wrow) {
            *d -= total * wv;
        }
    }
    Ok(delta)
}

/// Instar update for a depthwise filter bank of shape (c, 1, kh, kw).
pub fn grossberg_depthwise_update(
    x: &Tensor4<f32>,
    y: &Tensor4<f32>,
    w: &Tensor4<f32>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<f32>> {
    let (_, _, kh, kw) = w.shape();
    let mut delta = depthwise_correlate(y, x, kh, kw, stride, padding)?;
    let (n, c, oh, ow) = y.shape();
    let k_len = kh * kw;
    for ch in 0..c {
        let mut total = 0.0f32;
        for b in 0..n {
            for yy in 0..oh {
                for xx in 0..ow {
                    total += y.at(b, ch, yy, xx);
                }
            }
        }
        let drow = &mut delta.data_mut()[ch * k_len..(ch + 1) * k_len];
        let wrow = &w.data()[ch * k_len..(ch + 1) * k_len];
        for (d, &wv) in drow.iter_mut().zip(wrow) {
            *d -= total * wv;
        }
    }
    Ok(delta)
}

/// Sliding-threshold update. Winners are selected per site, each output
/// channel's threshold moves toward the mean squared winning activity,
/// and the plasticity signal is `y * (y - theta)` for the winners.
/// Returns the weight update and the advanced thresholds.
pub fn bcm_update(
    x: &Tensor4<f32>,
    y: &Tensor4<f32>,
    w: &Tensor4<f32>,
    theta: &[f32],
    alpha: f32,
    geom: &ConvGeometry,
) -> Result<(Tensor4<f32>, Vec<f32>)> {
    geom.validate_filters(w)?;
    if !(0.0..=1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Parameter(format!("threshold decay {alpha} must be in (0, 1]")));
    }
    let mask = hard_wta_mask(y);
    let psi = masked_bcm_psi(y, &mask, theta, alpha);
    let delta = correlate_filters(&psi.0, x, geom)?;
    Ok((delta, psi.1))
}

/// Depthwise sliding-threshold update; with one candidate per spatial
/// site and channel there is no cross-channel competition to apply.
pub fn bcm_depthwise_update(
    x: &Tensor4<f32>,
    y: &Tensor4<f32>,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    theta: &[f32],
    alpha: f32,
) -> Result<(Tensor4<f32>, Vec<f32>)> {
    if !(0.0..=1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Parameter(format!("threshold decay {alpha} must be in (0, 1]")));
    }
    let ones = y.map(|_| 1.0);
    let psi = masked_bcm_psi(y, &ones, theta, alpha);
    let delta = depthwise_correlate(&psi.0, x, kh, kw, stride, padding)?;
    Ok((delta, psi.1))
}

fn masked_bcm_psi(
    y: &Tensor4<f32>,
    mask: &Tensor4<f32>,
    theta: &[f32],
    alpha: f32,
) -> (Tensor4<f32>, Vec<f32>) {
    let (n, c, h, w) = y.shape();
    assert_eq!(theta.len(), c);
    let count = (n * h * w) as f32;
    let mut new_theta = vec![0.0f32; c];
    for ch in 0..c {
        let mut acc = 0.0f32;
        for b in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let v = y.at(b, ch, yy, xx) * mask.at(b, ch, yy, xx);
                    acc += v * v;
                }
            }
        }
        new_theta[ch] = (1.0 - alpha) * theta[ch] + alpha * acc / count;
    }
    let mut psi = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let v = y.at(b, ch, yy, xx) * mask.at(b, ch, yy, xx);
                    if mask.at(b, ch, yy, xx) != 0.0 {
                        *psi.at_mut(b, ch, yy, xx) = v * (v - new_theta[ch]);
                    }
                }
            }
        }
    }
    (psi, new_theta)
}

/// Soft-competition update. The per-site softmax of the response drives
/// every filter: the winning channel keeps its softmax value, all other
/// channels use the negated value, and each filter decays by the
/// softmax-weighted sum of its own raw responses. Returns the update and
/// the softmax activation.
pub fn softhebb_update(
    x: &Tensor4<f32>,
    u: &Tensor4<f32>,
    w: &Tensor4<f32>,
    geom: &ConvGeometry,
    inv_temp: f32,
) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    geom.validate_filters(w)?;
    if inv_temp <= 0.0 {
        return Err(Error::Parameter(format!("inverse temperature {inv_temp} must be positive")));
    }
    let y = super::competition::soft_wta_activation(u, inv_temp);
    let (n, c, h, ww) = y.shape();
    // signed plasticity: winner keeps +y, losers get -y at every site
    let mut psi = Tensor4::zeros(n, c, h, ww);
    for b in 0..n {
        for yy in 0..h {
            for xx in 0..ww {
                let mut best = u.at(b, 0, yy, xx);
                let mut winner = 0;
                for ch in 1..c {
                    let v = u.at(b, ch, yy, xx);
                    if v > best {
                        best = v;
                        winner = ch;
                    }
                }
                for ch in 0..c {
                    let s = if ch == winner { 1.0 } else { -1.0 };
                    *psi.at_mut(b, ch, yy, xx) = s * y.at(b, ch, yy, xx);
                }
            }
        }
    }
    let mut delta = correlate_filters(&psi, x, geom)?;
    let k_len = geom.patch_len();
    for f in 0..c {
        let mut decay = 0.0f32;
        for b in 0..n {
            for yy in 0..h {
                for xx in 0..ww {
                    decay += psi.at(b, f, yy, xx) * u.at(b, f, yy, xx);
                }
            }
        }
        let drow = &mut delta.data_mut()[f * k_len..(f + 1) * k_len];
        let wrow = &w.data()[f * k_len..(f + 1) * k_len];
        for (d, &wv) in drow.iter_mut().zip(wrow) {
            *d -= decay * wv;
        }
    }
    Ok((delta, y))
}

/// Scale an update so its largest magnitude is 1; a zero update is left
/// untouched.
pub fn normalize_update(delta: &mut Tensor4<f32>) {
    let m = delta.max_abs();
    if m > 0.0 {
        delta.scale(1.0 / m);
    }
}

/// Project weights onto non-negative values by absolute value, a
/// single-sign constraint on every synapse.
pub fn dale_project(w: &mut Tensor4<f32>) {
    for v in w.data_mut() {
        *v = v.abs();
    }
}

/// Uniform fan-in initialization on (-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn kaiming_uniform_init<R: Rng>(oc: usize, ic: usize, kh: usize, kw: usize, rng: &mut R) -> Tensor4<f32> {
    let bound = 1.0 / ((ic * kh * kw) as f32).sqrt();
    let data = (0..oc * ic * kh * kw).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor4::from_vec(oc, ic, kh, kw, data).unwrap()
}

/// Gaussian initialization with scale 25/sqrt(fan_in), sized for
/// soft-competition layers.
pub fn softwta_weight_init<R: Rng>(oc: usize, ic: usize, kh: usize, kw: usize, rng: &mut R) -> Tensor4<f32> {
    let range = 25.0 / ((ic * kh * kw) as f32).sqrt();
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    let data = (0..oc * ic * kh * kw).map(|_| range * normal.sample(rng)).collect();
    Tensor4::from_vec(oc, ic, kh, kw, data).unwrap()
}
