//! Triangle (rectified polynomial) activation: at each (batch, h, w) site
//! the channel mean is subtracted, the result rectified, then raised to a
//! per-layer power.

use super::{Element, Tensor4};

pub fn triangle_activation<T: Element>(x: &Tensor4<T>, power: T) -> Tensor4<T> {
    let (n, c, h, w) = x.shape();
    let cn = T::from_usize(c);
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut mean = T::zero();
                for ch in 0..c {
                    mean = mean + x.at(b, ch, y, xx);
                }
                mean = mean / cn;
                for ch in 0..c {
                    let t = x.at(b, ch, y, xx) - mean;
                    let r = if t > T::zero() { t } else { T::zero() };
                    *out.at_mut(b, ch, y, xx) = if power == T::one() { r } else { r.powf(power) };
                }
            }
        }
    }
    out
}

/// Adjoint of [`triangle_activation`]. The derivative at the rectifier
/// kink is taken as 0.
pub fn triangle_backward<T: Element>(gy: &Tensor4<T>, x: &Tensor4<T>, power: T) -> Tensor4<T> {
    let (n, c, h, w) = x.shape();
    let cn = T::from_usize(c);
    let mut gx = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut mean = T::zero();
                for ch in 0..c {
                    mean = mean + x.at(b, ch, y, xx);
                }
                mean = mean / cn;
                // gradient through r^p then through the mean subtraction
                let mut gsum = T::zero();
                let mut gt = vec![T::zero(); c];
                for ch in 0..c {
                    let t = x.at(b, ch, y, xx) - mean;
                    if t > T::zero() {
                        let d = if power == T::one() {
                            T::one()
                        } else {
                            power * t.powf(power - T::one())
                        };
                        gt[ch] = gy.at(b, ch, y, xx) * d;
                    }
                    gsum = gsum + gt[ch];
                }
                let gmean = gsum / cn;
                for ch in 0..c {
                    *gx.at_mut(b, ch, y, xx) = gt[ch] - gmean;
                }
            }
        }
    }
    gx
}
