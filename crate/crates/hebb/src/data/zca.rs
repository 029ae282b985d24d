//! Zero-phase whitening over flattened images: W = E diag(1/sqrt(l+eps)) E^T
//! from the eigendecomposition of the training pixel covariance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

use super::{LabeledDataset, Split};

/// Whitening statistics fitted on the training split only.
#[derive(Debug, Clone)]
pub struct ZcaStats {
    /// Per-flattened-pixel mean of the training data.
    pub mean: Vec<f32>,
    /// Symmetric whitening matrix, row-major d x d.
    pub w: Vec<f32>,
    pub dim: usize,
    pub eps: f64,
}

/// Fit whitening statistics on a training dataset.
pub fn zca_fit(train: &LabeledDataset, eps: f64) -> Result<ZcaStats> {
    if train.split != Split::Train {
        return Err(Error::Parameter(
            "whitening statistics must be fitted on the training split".into(),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter(format!("whitening eps {eps} must be positive")));
    }
    let n = train.len();
    if n == 0 {
        return Err(Error::Parameter("cannot whiten an empty dataset".into()));
    }
    let (_, c, h, w) = train.images.shape();
    let d = c * h * w;

    let mut mean = vec![0.0f64; d];
    for b in 0..n {
        for (m, &v) in mean.iter_mut().zip(train.images.image(b)) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // covariance of centered rows, accumulated in fixed order
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for b in 0..n {
        for (i, &v) in train.images.image(b).iter().enumerate() {
            centered[i] = v as f64 - mean[i];
        }
        cov.syger(1.0 / n as f64, &centered, &centered, 1.0);
    }
    // syger fills the lower triangle; mirror it
    for i in 0..d {
        for j in (i + 1)..d {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let eig = cov.symmetric_eigen();
    if !eig.eigenvalues.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    let scales = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| 1.0 / (l.max(0.0) + eps).sqrt()));
    let mut wm = DMatrix::<f64>::zeros(d, d);
    // W = E diag(scales) E^T
    let e = &eig.eigenvectors;
    let scaled = e * DMatrix::from_diagonal(&scales);
    scaled.mul_to(&e.transpose(), &mut wm);

    Ok(ZcaStats {
        mean: mean.iter().map(|&v| v as f32).collect(),
        w: wm.transpose().iter().map(|&v| v as f32).collect(), // row-major
        dim: d,
        eps,
    })
}

/// Whiten a batch of images with train-fitted statistics.
pub fn zca_apply(stats: &ZcaStats, images: &Tensor4<f32>) -> Result<Tensor4<f32>> {
    let (n, c, h, w) = images.shape();
    let d = c * h * w;
    if d != stats.dim {
        return Err(Error::Dimension(format!(
            "image dimension {d} does not match whitening dimension {}",
            stats.dim
        )));
    }
    let mut out = Tensor4::zeros(n, c, h, w);
    let rows: Vec<&[f32]> = (0..n).map(|b| images.image(b)).collect();
    let results: Vec<Vec<f32>> = rows
        .par_iter()
        .map(|row| {
            let centered: Vec<f32> = row.iter().zip(&stats.mean).map(|(&v, &m)| v - m).collect();
            (0..d)
                .map(|i| {
                    let wrow = &stats.w[i * d..(i + 1) * d];
                    wrow.iter().zip(&centered).map(|(&a, &b)| a * b).sum()
                })
                .collect()
        })
        .collect();
    for (b, row) in results.into_iter().enumerate() {
        out.image_mut(b).copy_from_slice(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn correlated_dataset(n: usize) -> LabeledDataset {
        // two correlated channels on a 2x2 grid: d = 8
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let mut images = Tensor4::zeros(n, 2, 2, 2);
        for b in 0..n {
            let base: f32 = rng.gen_range(0.0..1.0);
            for i in 0..8 {
                let noise: f32 = rng.gen_range(-0.05..0.05);
                images.image_mut(b)[i] = (0.6 * base + 0.2 + 0.3 * noise + 0.02 * i as f32).clamp(0.0, 1.0);
            }
        }
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        LabeledDataset::new(images, labels, Split::Train).unwrap()
    }

    #[test]
    fn whitening_matrix_is_symmetric() {
        let ds = correlated_dataset(200);
        let stats = zca_fit(&ds, 1e-2).unwrap();
        let d = stats.dim;
        let mut max_asym = 0.0f32;
        for i in 0..d {
            for j in 0..d {
                max_asym = max_asym.max((stats.w[i * d + j] - stats.w[j * d + i]).abs());
            }
        }
        assert!(max_asym < 1e-5, "asymmetry {max_asym}");
    }

    #[test]
    fn whitened_covariance_is_near_identity() {
        let ds = correlated_dataset(500);
        // small eps so real directions are fully whitened
        let stats = zca_fit(&ds, 1e-6).unwrap();
        let white = zca_apply(&stats, &ds.images).unwrap();
        let n = ds.len();
        let d = stats.dim;
        // covariance oracle on the whitened rows
        let mut mean = vec![0.0f64; d];
        for b in 0..n {
            for (m, &v) in mean.iter_mut().zip(white.image(b)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0f64; d * d];
        for b in 0..n {
            let row = white.image(b);
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (row[i] as f64 - mean[i]) * (row[j] as f64 - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= n as f64);
        // eps-dominated dimensions (tiny eigenvalues) are excluded by only
        // checking rows whose diagonal is materially above zero
        for i in 0..d {
            let dii = cov[i * d + i];
            if dii < 0.5 {
                continue;
            }
            assert!((dii - 1.0).abs() < 0.1, "diag[{i}] = {dii}");
            for j in 0..d {
                if j != i && cov[j * d + j] >= 0.5 {
                    assert!(cov[i * d + j].abs() < 0.1, "off-diag [{i},{j}] = {}", cov[i * d + j]);
                }
            }
        }
    }

    #[test]
    fn mean_image_maps_to_zero() {
        let ds = correlated_dataset(100);
        let stats = zca_fit(&ds, 1e-2).unwrap();
        let mean_img = Tensor4::from_vec(1, 2, 2, 2, stats.mean.clone()).unwrap();
        let out = zca_apply(&stats, &mean_img).unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-4));
    }

    #[test]
    fn fit_requires_training_split() {
        let mut ds = correlated_dataset(10);
        ds.split = Split::Test;
        assert!(zca_fit(&ds, 1e-2).is_err());
        ds.split = Split::Train;
        assert!(zca_fit(&ds, 0.0).is_err());
    }

    #[test]
    fn apply_checks_dimensions() {
        let ds = correlated_dataset(10);
        let stats = zca_fit(&ds, 1e-2).unwrap();
        let wrong = Tensor4::zeros(1, 3, 2, 2);
        assert!(zca_apply(&stats, &wrong).is_err());
    }

    #[test]
    fn identity_when_already_white() {
        // uncorrelated unit-variance noise: W should be close to identity
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let n = 4000;
        let mut images = Tensor4::zeros(n, 1, 2, 2);
        for b in 0..n {
            for v in images.image_mut(b) {
                // +/-1 coin flips: zero mean, unit variance, uncorrelated
                *v = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
        let ds = LabeledDataset::new(images, vec![0; n], Split::Train).unwrap();
        let stats = zca_fit(&ds, 1e-6).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (stats.w[i * 4 + j] - expect).abs() < 0.1,
                    "W[{i},{j}] = {}",
                    stats.w[i * 4 + j]
                );
            }
        }
    }
}
