//! Max and average pooling. Padding contributes negative infinity for max
//! pooling; average pooling divides by the full window size including
//! padded zeros.

use rayon::prelude::*;

use super::{Element, Tensor4};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return Err(Error::Dimension(format!(
            "pool window {kernel}/stride {stride} invalid for input {input} with padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

pub fn pool_forward<T: Element>(
    x: &Tensor4<T>,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    let (n, c, h, w) = x.shape();
    let out_h = out_extent(h, kernel, stride, padding)?;
    let out_w = out_extent(w, kernel, stride, padding)?;
    let mut out = Tensor4::zeros(n, c, out_h, out_w);
    let plane_out = out_h * out_w;
    out.data_mut()
        .par_chunks_mut(plane_out)
        .enumerate()
        .for_each(|(pi, dst)| {
            let (b, ch) = (pi / c, pi % c);
            let plane = &x.image(b)[ch * h * w..(ch + 1) * h * w];
            let window = T::from_usize(kernel * kernel);
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut best = T::neg_infinity();
                    let mut sum = T::zero();
                    for i in 0..kernel {
                        let iy = (oy * stride + i) as isize - padding as isize;
                        for j in 0..kernel {
                            let ix = (ox * stride + j) as isize - padding as isize;
                            let v = if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                plane[iy as usize * w + ix as usize]
                            };
                            sum = sum + v;
                            let vm = if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                T::neg_infinity()
                            } else {
                                v
                            };
                            if vm > best {
                                best = vm;
                            }
                        }
                    }
                    dst[oy * out_w + ox] = match kind {
                        PoolKind::Max => best,
                        PoolKind::Avg => sum / window,
                    };
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`pool_forward`]. Max pooling routes each output gradient to
/// the first maximal element of its window (matching the forward scan
/// order); average pooling distributes it uniformly.
pub fn pool_backward<T: Element>(
    gy: &Tensor4<T>,
    x: &Tensor4<T>,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    let (n, c, h, w) = x.shape();
    let (_, _, out_h, out_w) = gy.shape();
    let mut gx = Tensor4::zeros(n, c, h, w);
    let plane = h * w;
    gx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(pi, gplane)| {
            let (b, ch) = (pi / c, pi % c);
            let xplane = &x.image(b)[ch * plane..(ch + 1) * plane];
            let grow = &gy.data()[(b * c + ch) * out_h * out_w..(b * c + ch + 1) * out_h * out_w];
            let window = T::from_usize(kernel * kernel);
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let g = grow[oy * out_w + ox];
                    match kind {
                        PoolKind::Max => {
                            let mut best = T::neg_infinity();
                            let mut best_idx: Option<usize> = None;
                            for i in 0..kernel {
                                let iy = (oy * stride + i) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for j in 0..kernel {
                                    let ix = (ox * stride + j) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let idx = iy as usize * w + ix as usize;
                                    if xplane[idx] > best {
                                        best = xplane[idx];
                                        best_idx = Some(idx);
                                    }
                                }
                            }
                            if let Some(idx) = best_idx {
                                gplane[idx] = gplane[idx] + g;
                            }
                        }
                        PoolKind::Avg => {
                            for i in 0..kernel {
                                let iy = (oy * stride + i) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for j in 0..kernel {
                                    let ix = (ox * stride + j) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let idx = iy as usize * w + ix as usize;
                                    gplane[idx] = gplane[idx] + g / window;
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(gx)
}
