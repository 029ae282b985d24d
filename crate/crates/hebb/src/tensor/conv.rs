//! Direct/im2col convolution kernels and their adjoints.
//!
//! All parallelism is over disjoint output slices or uses fixed-order
//! reductions, so results are bitwise identical for any thread count.

use rayon::prelude::*;

use super::{ConvGeometry, Element, Tensor4};
use crate::error::{Error, Result};

/// Unfold one image (c, h, w) into a (patch_len x sites) column matrix.
/// Row index k = (ch * kernel_h + i) * kernel_w + j, column index s = oy * out_w + ox.
fn im2col_into<T: Element>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    geom: &ConvGeometry,
    out_h: usize,
    out_w: usize,
    buf: &mut [T],
) {
    let sites = out_h * out_w;
    debug_assert_eq!(buf.len(), geom.patch_len() * sites);
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let (stride, pad) = (geom.stride, geom.padding);
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let k = (ch * kh + i) * kw + j;
                let row = &mut buf[k * sites..(k + 1) * sites];
                for oy in 0..out_h {
                    let iy = (oy * stride + i) as isize - pad as isize;
                    let dst = &mut row[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..out_w {
                        let ix = (ox * stride + j) as isize - pad as isize;
                        dst[ox] = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn unfold_batch<T: Element>(x: &Tensor4<T>, geom: &ConvGeometry, out_h: usize, out_w: usize) -> Vec<Vec<T>> {
    let (_, c, h, w) = x.shape();
    (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let mut buf = vec![T::zero(); geom.patch_len() * out_h * out_w];
            im2col_into(x.image(b), c, h, w, geom, out_h, out_w, &mut buf);
            buf
        })
        .collect()
}

/// 2-D cross-correlation of `x` with the filter bank `w`.
///
/// The value at each output site is the dot product of the filter with the
/// zero-padded input window.
pub fn conv2d_forward<T: Element>(x: &Tensor4<T>, w: &Tensor4<T>, geom: &ConvGeometry) -> Result<Tensor4<T>> {
    geom.validate_input(x)?;
    geom.validate_filters(w)?;
    if !x.all_finite() {
        return Err(Error::Numeric("non-finite value in convolution input".into()));
    }
    let (n, c, h, win) = x.shape();
    let (out_h, out_w) = geom.out_hw(h, win)?;
    let sites = out_h * out_w;
    let k_len = geom.patch_len();
    let oc = geom.out_channels;

    let mut out = Tensor4::zeros(n, oc, out_h, out_w);
    let out_stride = oc * sites;
    out.data_mut()
        .par_chunks_mut(out_stride)
        .enumerate()
        .for_each(|(b, out_img)| {
            let mut cols = vec![T::zero(); k_len * sites];
            im2col_into(x.image(b), c, h, win, geom, out_h, out_w, &mut cols);
            for f in 0..oc {
                let filt = &w.data()[f * k_len..(f + 1) * k_len];
                let dst = &mut out_img[f * sites..(f + 1) * sites];
                for k in 0..k_len {
                    let a = filt[k];
                    if a == T::zero() {
                        continue;
                    }
                    let src = &cols[k * sites..(k + 1) * sites];
                    for s in 0..sites {
                        dst[s] = dst[s] + a * src[s];
                    }
                }
            }
        });
    Ok(out)
}

/// Accumulate, for each filter, the sum over all sites of the post-synaptic
/// activity times the input window there. This is both the Hebbian
/// correlation term and the convolution weight gradient.
pub fn correlate_filters<T: Element>(y: &Tensor4<T>, x: &Tensor4<T>, geom: &ConvGeometry) -> Result<Tensor4<T>> {
    geom.validate_input(x)?;
    let (n, oc, out_h, out_w) = y.shape();
    if oc != geom.out_channels {
        return Err(Error::Dimension(format!(
            "activity has {oc} channels, geometry expects {}",
            geom.out_channels
        )));
    }
    let (_, c, h, win) = x.shape();
    let (eh, ew) = geom.out_hw(h, win)?;
    if (eh, ew) != (out_h, out_w) {
        return Err(Error::Dimension(format!(
            "activity spatial size ({out_h},{out_w}) does not match expected ({eh},{ew})"
        )));
    }
    let sites = out_h * out_w;
    let k_len = geom.patch_len();
    let cols = unfold_batch(x, geom, out_h, out_w);

    // Sparse site lists pay off under hard competition where most of y is zero.
    let nonzero: Vec<Vec<Vec<(u32, T)>>> = (0..n)
        .into_par_iter()
        .map(|b| {
            (0..oc)
                .map(|f| {
                    let row_base = (b * oc + f) * sites;
                    (0..sites)
                        .filter_map(|s| {
                            let v = y.data()[row_base + s];
                            (v != T::zero()).then_some((s as u32, v))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut dw = Tensor4::zeros(oc, c, geom.kernel_h, geom.kernel_w);
    dw.data_mut()
        .par_chunks_mut(k_len)
        .enumerate()
        .for_each(|(f, row)| {
            for b in 0..n {
                let sites_nz = &nonzero[b][f];
                if sites_nz.is_empty() {
                    continue;
                }
                let img_cols = &cols[b];
                for k in 0..k_len {
                    let src = &img_cols[k * sites..(k + 1) * sites];
                    let mut acc = T::zero();
                    for &(s, v) in sites_nz {
                        acc = acc + v * src[s as usize];
                    }
                    row[k] = row[k] + acc;
                }
            }
        });
    Ok(dw)
}

/// Adjoint of [`conv2d_forward`] with respect to its input.
pub fn conv2d_input_grad<T: Element>(
    gy: &Tensor4<T>,
    w: &Tensor4<T>,
    geom: &ConvGeometry,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor4<T>> {
    geom.validate_filters(w)?;
    let (n, oc, out_h, out_w) = gy.shape();
    if oc != geom.out_channels {
        return Err(Error::Dimension("channel mismatch in input gradient".into()));
    }
    let sites = out_h * out_w;
    let k_len = geom.patch_len();
    let c = geom.in_channels;
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let (stride, pad) = (geom.stride, geom.padding);

    let mut gx = Tensor4::zeros(n, c, in_h, in_w);
    let img_stride = c * in_h * in_w;
    gx.data_mut()
        .par_chunks_mut(img_stride)
        .enumerate()
        .for_each(|(b, gx_img)| {
            // gcols = w^T * gy for this image, then scatter-add back.
            let mut gcols = vec![T::zero(); k_len * sites];
            for f in 0..oc {
                let filt = &w.data()[f * k_len..(f + 1) * k_len];
                let grow = &gy.data()[(b * oc + f) * sites..(b * oc + f + 1) * sites];
                for k in 0..k_len {
                    let a = filt[k];
                    if a == T::zero() {
                        continue;
                    }
                    let dst = &mut gcols[k * sites..(k + 1) * sites];
                    for s in 0..sites {
                        dst[s] = dst[s] + a * grow[s];
                    }
                }
            }
            for ch in 0..c {
                for i in 0..kh {
                    for j in 0..kw {
                        let k = (ch * kh + i) * kw + j;
                        let src = &gcols[k * sites..(k + 1) * sites];
                        for oy in 0..out_h {
                            let iy = (oy * stride + i) as isize - pad as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            for ox in 0..out_w {
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                let idx = (ch * in_h + iy as usize) * in_w + ix as usize;
                                gx_img[idx] = gx_img[idx] + src[oy * out_w + ox];
                            }
                        }
                    }
                }
            }
        });
    Ok(gx)
}

/// Depthwise convolution: one (kh, kw) filter per input channel, no
/// cross-channel mixing. Filter bank shape is (c, 1, kh, kw).
pub fn depthwise_forward<T: Element>(
    x: &Tensor4<T>,
    w: &Tensor4<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    let (n, c, h, win) = x.shape();
    let (wc, one, kh, kw) = w.shape();
    if wc != c || one != 1 {
        return Err(Error::Dimension(format!(
            "depthwise filter bank ({wc},{one},{kh},{kw}) does not match {c} input channels"
        )));
    }
    let geom = ConvGeometry {
        in_channels: 1,
        out_channels: 1,
        kernel_h: kh,
        kernel_w: kw,
        stride,
        padding,
    };
    let (out_h, out_w) = geom.out_hw(h, win)?;
    let mut out = Tensor4::zeros(n, c, out_h, out_w);
    let out_stride = c * out_h * out_w;
    out.data_mut()
        .par_chunks_mut(out_stride)
        .enumerate()
        .for_each(|(b, out_img)| {
            let img = x.image(b);
            for ch in 0..c {
                let plane = &img[ch * h * win..(ch + 1) * h * win];
                let filt = &w.data()[ch * kh * kw..(ch + 1) * kh * kw];
                let dst = &mut out_img[ch * out_h * out_w..(ch + 1) * out_h * out_w];
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let mut acc = T::zero();
                        for i in 0..kh {
                            let iy = (oy * stride + i) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (ox * stride + j) as isize - padding as isize;
                                if ix < 0 || ix >= win as isize {
                                    continue;
                                }
                                acc = acc + filt[i * kw + j] * plane[iy as usize * win + ix as usize];
                            }
                        }
                        dst[oy * out_w + ox] = acc;
                    }
                }
            }
        });
    Ok(out)
}

/// Per-channel Hebbian correlation for a depthwise filter bank.
pub fn depthwise_correlate<T: Element>(
    y: &Tensor4<T>,
    x: &Tensor4<T>,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    let (n, c, h, win) = x.shape();
    let (yn, yc, out_h, out_w) = y.shape();
    if yn != n || yc != c {
        return Err(Error::Dimension("depthwise activity shape mismatch".into()));
    }
    let mut dw = Tensor4::zeros(c, 1, kh, kw);
    dw.data_mut()
        .par_chunks_mut(kh * kw)
        .enumerate()
        .for_each(|(ch, row)| {
            for b in 0..n {
                let plane = &x.image(b)[ch * h * win..(ch + 1) * h * win];
                let yrow = &y.data()[(b * c + ch) * out_h * out_w..(b * c + ch + 1) * out_h * out_w];
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let v = yrow[oy * out_w + ox];
                        if v == T::zero() {
                            continue;
                        }
                        for i in 0..kh {
                            let iy = (oy * stride + i) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (ox * stride + j) as isize - padding as isize;
                                if ix < 0 || ix >= win as isize {
                                    continue;
                                }
                                row[i * kw + j] =
                                    row[i * kw + j] + v * plane[iy as usize * win + ix as usize];
                            }
                        }
                    }
                }
            }
        });
    Ok(dw)
}

/// Adjoint of [`depthwise_forward`] with respect to its input.
pub fn depthwise_input_grad<T: Element>(
    gy: &Tensor4<T>,
    w: &Tensor4<T>,
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor4<T>> {
    let (n, c, out_h, out_w) = gy.shape();
    let (_, _, kh, kw) = w.shape();
    let mut gx = Tensor4::zeros(n, c, in_h, in_w);
    let img_stride = c * in_h * in_w;
    gx.data_mut()
        .par_chunks_mut(img_stride)
        .enumerate()
        .for_each(|(b, gx_img)| {
            for ch in 0..c {
                let filt = &w.data()[ch * kh * kw..(ch + 1) * kh * kw];
                let grow = &gy.data()[(b * c + ch) * out_h * out_w..(b * c + ch + 1) * out_h * out_w];
                let plane = &mut gx_img[ch * in_h * in_w..(ch + 1) * in_h * in_w];
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let g = grow[oy * out_w + ox];
                        if g == T::zero() {
                            continue;
                        }
                        for i in 0..kh {
                            let iy = (oy * stride + i) as isize - padding as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (ox * stride + j) as isize - padding as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                plane[iy as usize * in_w + ix as usize] =
                                    plane[iy as usize * in_w + ix as usize] + g * filt[i * kw + j];
                            }
                        }
                    }
                }
            }
        });
    Ok(gx)
}

/// Local input norm: sqrt((x^2 convolved with an all-ones kernel) + eps),
/// one value per output site shared across all filters.
pub fn local_input_norm<T: Element>(x: &Tensor4<T>, geom: &ConvGeometry, eps: T) -> Result<Tensor4<T>> {
    geom.validate_input(x)?;
    if eps <= T::zero() {
        return Err(Error::Parameter("local norm eps must be positive".into()));
    }
    let (n, c, h, win) = x.shape();
    let (out_h, out_w) = geom.out_hw(h, win)?;
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let (stride, pad) = (geom.stride, geom.padding);
    let mut out = Tensor4::zeros(n, 1, out_h, out_w);
    out.data_mut()
        .par_chunks_mut(out_h * out_w)
        .enumerate()
        .for_each(|(b, dst)| {
            let img = x.image(b);
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = T::zero();
                    for ch in 0..c {
                        let plane = &img[ch * h * win..(ch + 1) * h * win];
                        for i in 0..kh {
                            let iy = (oy * stride + i) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if ix < 0 || ix >= win as isize {
                                    continue;
                                }
                                let v = plane[iy as usize * win + ix as usize];
                                acc = acc + v * v;
                            }
                        }
                    }
                    dst[oy * out_w + ox] = (acc + eps).sqrt();
                }
            }
        });
    Ok(out)
}
