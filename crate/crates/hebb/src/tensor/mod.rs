//! Minimal dense-tensor kernel layer: convolution, pooling, batch
//! normalization, the Triangle activation, and the hand-written adjoints
//! of the forward stack.

mod batchnorm;
mod conv;
mod pool;
pub mod stack;
mod triangle;

pub use batchnorm::{batchnorm_forward, BatchNormState};
pub use conv::{
    conv2d_forward, conv2d_input_grad, correlate_filters, depthwise_correlate, depthwise_forward,
    depthwise_input_grad, local_input_norm,
};
pub use pool::{pool_backward, pool_forward, PoolKind};
pub use stack::StackLayer;
pub use triangle::{triangle_activation, triangle_backward};

use crate::error::{Error, Result};

/// Scalar element of a [`Tensor4`]. 32-bit is the production precision,
/// 64-bit is used by oracle tests.
pub trait Element:
    num_traits::Float + num_traits::NumCast + std::iter::Sum + Send + Sync + std::fmt::Debug + 'static
{
    fn from_f64(v: f64) -> Self {
        num_traits::NumCast::from(v).unwrap()
    }
    fn from_usize(v: usize) -> Self {
        num_traits::NumCast::from(v).unwrap()
    }
}

impl Element for f32 {}
impl Element for f64 {}

/// Dense rank-4 array in (batch, channel, height, width) order,
/// row-major and contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Element> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Dimension(format!(
                "buffer length {} does not match shape ({n},{c},{h},{w})",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Build from a closure over (n, c, h, w) indices.
    pub fn from_fn(n: usize, c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(n, c, h, w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        *t.at_mut(b, ch, y, x) = f(b, ch, y, x);
                    }
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }
    pub fn channels(&self) -> usize {
        self.c
    }
    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        debug_assert!(n < self.n && c < self.c && h < self.h && w < self.w);
        self.data[((n * self.c + c) * self.h + h) * self.w + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        debug_assert!(n < self.n && c < self.c && h < self.h && w < self.w);
        &mut self.data[((n * self.c + c) * self.h + h) * self.w + w]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Contiguous slice holding one image of the batch.
    pub fn image(&self, n: usize) -> &[T] {
        let stride = self.c * self.h * self.w;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub fn image_mut(&mut self, n: usize) -> &mut [T] {
        let stride = self.c * self.h * self.w;
        &mut self.data[n * stride..(n + 1) * stride]
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        Self {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    /// Elementwise `self += other * s`.
    pub fn add_scaled(&mut self, other: &Self, s: T) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + b * s;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Cast elementwise into another precision.
    pub fn cast<U: Element>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// Convolution geometry shared by a filter bank and its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    /// Output spatial extent: floor((in + 2p - k)/s) + 1, which must be >= 1.
    pub fn out_size(&self, input: usize, kernel: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if kernel == 0 || self.stride == 0 {
            return Err(Error::Parameter("kernel and stride must be positive".into()));
        }
        if padded < kernel {
            return Err(Error::Dimension(format!(
                "kernel {kernel} larger than padded input {padded}"
            )));
        }
        Ok((padded - kernel) / self.stride + 1)
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((self.out_size(h, self.kernel_h)?, self.out_size(w, self.kernel_w)?))
    }

    /// Flattened patch length seen by one filter.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn validate_input<T: Element>(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Dimension(format!(
                "input has {} channels, geometry expects {}",
                x.channels(),
                self.in_channels
            )));
        }
        Ok(())
    }

    pub fn validate_filters<T: Element>(&self, w: &Tensor4<T>) -> Result<()> {
        let (oc, ic, kh, kw) = w.shape();
        if oc != self.out_channels || ic != self.in_channels || kh != self.kernel_h || kw != self.kernel_w {
            return Err(Error::Dimension(format!(
                "filter bank shape ({oc},{ic},{kh},{kw}) does not match geometry {self:?}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::<f32>::from_vec(1, 2, 2, 2, vec![0.0; 8]).is_ok());
        assert!(Tensor4::<f32>::from_vec(1, 2, 2, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_vec(1, 2, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 1, 0), 2.0);
        assert_eq!(t.at(0, 1, 0, 1), 5.0);
        assert_eq!(t.at(0, 1, 1, 1), 7.0);
    }

    #[test]
    fn geometry_output_size() {
        let g = ConvGeometry::square(3, 96, 5, 1, 2);
        assert_eq!(g.out_hw(32, 32).unwrap(), (32, 32));
        let g = ConvGeometry::square(3, 96, 5, 1, 0);
        assert_eq!(g.out_hw(32, 32).unwrap(), (28, 28));
        // MaxPool-style geometry 4x4 stride 2 pad 1
        let g = ConvGeometry::square(96, 96, 4, 2, 1);
        assert_eq!(g.out_hw(32, 32).unwrap(), (16, 16));
    }

    #[test]
    fn kernel_larger_than_input_errors() {
        let g = ConvGeometry::square(1, 1, 7, 1, 0);
        assert!(g.out_hw(4, 4).is_err());
    }
}
