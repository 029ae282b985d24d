//! Supervised linear head on frozen features: softmax cross-entropy,
//! Adam, a step-halving schedule, inverted dropout, and evaluation.

mod metrics;
mod stats;

pub use metrics::{compute_metrics, MetricsReport, CLASSES};
pub use stats::{aggregate_stats, RunStats, StatWindow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor4};

/// Row-major (samples x features) matrix of frozen features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f32>,
    pub n: usize,
    pub d: usize,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "feature buffer length {} does not match {n}x{d}",
                data.len()
            )));
        }
        Ok(Self { data, n, d })
    }

    /// Flatten a (n, c, h, w) activation tensor into rows.
    pub fn from_tensor(t: &Tensor4<f32>) -> Self {
        let (n, c, h, w) = t.shape();
        Self {
            data: t.data().to_vec(),
            n,
            d: c * h * w,
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Append the rows of another matrix with the same width.
    pub fn extend_rows(&mut self, other: &FeatureMatrix) -> Result<()> {
        if self.d != other.d {
            return Err(Error::Dimension(format!(
                "cannot append {}-wide rows to a {}-wide matrix",
                other.d, self.d
            )));
        }
        self.data.extend_from_slice(&other.data);
        self.n += other.n;
        Ok(())
    }
}

/// Single linear layer from features to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// Row-major (classes x features).
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub classes: usize,
    pub features: usize,
}

impl LinearHead {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            w: vec![0.0; classes * features],
            b: vec![0.0; classes],
            classes,
            features,
        }
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f32> {
        (0..self.classes)
            .map(|k| {
                let row = &self.w[k * self.features..(k + 1) * self.features];
                row.iter().zip(x).map(|(&w, &v)| w * v).sum::<f32>() + self.b[k]
            })
            .collect()
    }

    /// Argmax class; ties resolve to the lowest index.
    pub fn predict(&self, x: &[f32]) -> u8 {
        let z = self.logits(x);
        let mut best = 0;
        for k in 1..self.classes {
            if z[k] > z[best] {
                best = k;
            }
        }
        best as u8
    }

    /// Predictions for every row, parallel over samples.
    pub fn predict_all(&self, x: &FeatureMatrix) -> Vec<u8> {
        (0..x.n).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }
}

/// Mean softmax cross-entropy and its gradient for one batch, generic so
/// the 64-bit oracle tests exercise the same code path.
pub fn cross_entropy_grad<T: Element>(
    w: &[T],
    b: &[T],
    classes: usize,
    d: usize,
    x: &[T],
    labels: &[u8],
) -> Result<(T, Vec<T>, Vec<T>)> {
    let n = labels.len();
    if x.len() != n * d || w.len() != classes * d || b.len() != classes {
        return Err(Error::Dimension("batch/parameter shape mismatch in cross-entropy".into()));
    }
    let mut loss = T::zero();
    let mut gw = vec![T::zero(); classes * d];
    let mut gb = vec![T::zero(); classes];
    let inv_n = T::one() / T::from_usize(n);
    for (i, &label) in labels.iter().enumerate() {
        let row = &x[i * d..(i + 1) * d];
        let mut z: Vec<T> = (0..classes)
            .map(|k| {
                let wr = &w[k * d..(k + 1) * d];
                wr.iter().zip(row).map(|(&a, &v)| a * v).sum::<T>() + b[k]
            })
            .collect();
        let m = z.iter().cloned().fold(T::neg_infinity(), |a, v| if v > a { v } else { a });
        let mut denom = T::zero();
        for v in &mut z {
            *v = (*v - m).exp();
            denom = denom + *v;
        }
        let label = label as usize;
        if label >= classes {
            return Err(Error::Parameter(format!("label {label} out of range")));
        }
        loss = loss - (z[label] / denom).ln() * inv_n;
        for k in 0..classes {
            let p = z[k] / denom;
            let dz = (p - if k == label { T::one() } else { T::zero() }) * inv_n;
            gb[k] = gb[k] + dz;
            let gr = &mut gw[k * d..(k + 1) * d];
            for (g, &v) in gr.iter_mut().zip(row) {
                *g = *g + dz * v;
            }
        }
    }
    Ok((loss, gw, gb))
}

/// First/second-moment accumulators for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update step at the given learning rate.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Learning rate at a 1-based epoch: halved at epochs 10, 12, 14, 16, 18.
pub fn lr_at_epoch(base: f32, epoch: usize) -> f32 {
    let cuts = [10usize, 12, 14, 16, 18].iter().filter(|&&c| epoch >= c).count();
    base * 0.5f32.powi(cuts as i32)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub base_lr: f32,
    pub dropout: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            base_lr: 0.001,
            dropout: 0.5,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// One epoch's learning rate, mean training loss, and both splits'
/// metrics.
#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub train: MetricsReport,
    pub test: MetricsReport,
}

/// Train the linear head with Adam on softmax cross-entropy; features are
/// consumed as produced, with inverted dropout during training only.
pub fn train_classifier(
    train_x: &FeatureMatrix,
    train_y: &[u8],
    test_x: &FeatureMatrix,
    test_y: &[u8],
    opts: &TrainOptions,
) -> Result<(LinearHead, Vec<EpochReport>)> {
    if train_x.n != train_y.len() || test_x.n != test_y.len() {
        return Err(Error::Dimension("feature/label count mismatch".into()));
    }
    if train_x.d != test_x.d {
        return Err(Error::Dimension("train/test feature widths differ".into()));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::Parameter(format!("dropout rate {} must be in [0,1)", opts.dropout)));
    }
    if opts.batch_size == 0 || opts.epochs == 0 {
        return Err(Error::Parameter("batch size and epochs must be positive".into()));
    }
    let d = train_x.d;
    let mut head = LinearHead::zeros(CLASSES, d);
    let mut adam_w = AdamState::new(CLASSES * d);
    let mut adam_b = AdamState::new(CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let keep = 1.0 - opts.dropout;
    let mut reports = Vec::with_capacity(opts.epochs);

    let mut order: Vec<usize> = (0..train_x.n).collect();
    let mut batch_rows = vec![0.0f32; opts.batch_size * d];
    for epoch in 1..=opts.epochs {
        let lr = lr_at_epoch(opts.base_lr, epoch);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0f64;
        let mut batch_count = 0usize;
        for batch in order.chunks(opts.batch_size) {
            let rows = &mut batch_rows[..batch.len() * d];
            let mut labels = Vec::with_capacity(batch.len());
            for (bi, &i) in batch.iter().enumerate() {
                let dst = &mut rows[bi * d..(bi + 1) * d];
                dst.copy_from_slice(train_x.row(i));
                labels.push(train_y[i]);
                if opts.dropout > 0.0 {
                    for v in dst.iter_mut() {
                        if rng.gen_range(0.0..1.0f32) < opts.dropout {
                            *v = 0.0;
                        } else {
                            *v /= keep;
                        }
                    }
                }
            }
            let (loss, gw, gb) = cross_entropy_grad(&head.w, &head.b, CLASSES, d, rows, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch} (lr {lr})"
                )));
            }
            adam_w.step(&mut head.w, &gw, lr);
            adam_b.step(&mut head.b, &gb, lr);
            loss_sum += loss as f64;
            batch_count += 1;
        }
        let train_pred = head.predict_all(train_x);
        let test_pred = head.predict_all(test_x);
        reports.push(EpochReport {
            epoch,
            lr,
            train_loss: loss_sum / batch_count as f64,
            train: compute_metrics(&train_pred, train_y)?,
            test: compute_metrics(&test_pred, test_y)?,
        });
    }
    Ok((head, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_from_epoch_ten() {
        assert_eq!(lr_at_epoch(0.001, 1), 0.001);
        assert_eq!(lr_at_epoch(0.001, 9), 0.001);
        assert_eq!(lr_at_epoch(0.001, 10), 0.0005);
        assert_eq!(lr_at_epoch(0.001, 11), 0.0005);
        assert_eq!(lr_at_epoch(0.001, 13), 0.00025);
        assert_eq!(lr_at_epoch(0.001, 18), 0.001 * 0.5f32.powi(5));
        assert_eq!(lr_at_epoch(0.001, 20), 0.001 * 0.5f32.powi(5));
    }

    #[test]
    fn zero_features_zero_init_loss_is_ln10() {
        let x = vec![0.0f64; 4 * 6];
        let w = vec![0.0f64; 10 * 6];
        let b = vec![0.0f64; 10];
        let (loss, gw, _) = cross_entropy_grad(&w, &b, 10, 6, &x, &[0, 3, 7, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!(gw.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // 64-bit central differences on every parameter
        let d = 3;
        let n = 4;
        let x: Vec<f64> = (0..n * d).map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0).collect();
        let labels = [1u8, 0, 2, 1];
        let mut w: Vec<f64> = (0..10 * d).map(|i| ((i * 13 % 23) as f64 - 11.0) / 30.0).collect();
        let mut b: Vec<f64> = (0..10).map(|i| (i as f64 - 5.0) / 20.0).collect();
        let (_, gw, gb) = cross_entropy_grad(&w, &b, 10, d, &x, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + eps;
            let (lp, _, _) = cross_entropy_grad(&w, &b, 10, d, &x, &labels).unwrap();
            w[i] = orig - eps;
            let (lm, _, _) = cross_entropy_grad(&w, &b, 10, d, &x, &labels).unwrap();
            w[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let denom = fd.abs().max(gw[i].abs()).max(1e-4);
            assert!((fd - gw[i]).abs() / denom < 1e-5, "w[{i}]: {fd} vs {}", gw[i]);
        }
        for k in 0..b.len() {
            let orig = b[k];
            b[k] = orig + eps;
            let (lp, _, _) = cross_entropy_grad(&w, &b, 10, d, &x, &labels).unwrap();
            b[k] = orig - eps;
            let (lm, _, _) = cross_entropy_grad(&w, &b, 10, d, &x, &labels).unwrap();
            b[k] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let denom = fd.abs().max(gb[k].abs()).max(1e-4);
            assert!((fd - gb[k]).abs() / denom < 1e-5, "b[{k}]");
        }
    }

    #[test]
    fn adam_matches_scalar_recursion_oracle() {
        // minimize f(p) = 0.5 p^2 from p = 1; grad = p
        let mut p = vec![1.0f32];
        let mut adam = AdamState::new(1);
        let lr = 0.1;
        // independent closed-form recursion
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut p_ref = 1.0f64;
        for t in 1..=5 {
            let g_actual = p[0];
            adam.step(&mut p, &[g_actual], lr);
            let g = p_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            p_ref -= lr as f64 * mhat / (vhat.sqrt() + eps);
            assert!((p[0] as f64 - p_ref).abs() < 1e-5, "step {t}: {} vs {p_ref}", p[0]);
        }
    }

    #[test]
    fn adam_first_step_opposes_gradient() {
        for &g in &[3.0f32, -0.02, 500.0] {
            let mut p = vec![0.0f32];
            let mut adam = AdamState::new(1);
            adam.step(&mut p, &[g], 0.01);
            assert!(p[0] * g < 0.0, "step did not oppose gradient {g}");
            // first-step magnitude is ~lr regardless of gradient scale
            assert!((p[0].abs() - 0.01).abs() < 1e-4);
        }
    }

    fn separable_features(n_per_class: usize, classes: usize) -> (FeatureMatrix, Vec<u8>) {
        // one-hot-ish features: class k lights feature k plus small noise
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        let d = classes + 2;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for k in 0..classes {
            for _ in 0..n_per_class {
                let mut row = vec![0.0f32; d];
                row[k] = 1.0;
                for v in row.iter_mut() {
                    *v += rng.gen_range(-0.05..0.05);
                }
                data.extend(row);
                labels.push(k as u8);
            }
        }
        (FeatureMatrix::new(labels.len(), d, data).unwrap(), labels)
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn head_learns_separable_data() {
        let (train_x, train_y) = separable_features(30, 10);
        let (test_x, test_y) = separable_features(10, 10);
        let opts = TrainOptions {
            epochs: 20,
            dropout: 0.2,
            batch_size: 32,
            ..Default::default()
        };
        let (head, reports) = train_classifier(&train_x, &train_y, &test_x, &test_y, &opts).unwrap();
        assert_eq!(reports.len(), 20);
        assert!(reports.last().unwrap().test.accuracy > 0.9, "final test acc {}", reports.last().unwrap().test.accuracy);
        assert!(head.w.iter().all(|v| v.is_finite()));
        // lr column obeys the schedule
        assert_eq!(reports[8].lr, 0.001);
        assert_eq!(reports[10].lr, 0.0005);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (train_x, train_y) = separable_features(10, 4);
        let opts = TrainOptions {
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let (h1, _) = train_classifier(&train_x, &train_y, &train_x, &train_y, &opts).unwrap();
        let (h2, _) = train_classifier(&train_x, &train_y, &train_x, &train_y, &opts).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn eval_path_has_no_dropout() {
        // prediction of a fixed head is deterministic and dropout-free
        let head = LinearHead {
            w: vec![0.5; 10 * 4],
            b: (0..10).map(|k| k as f32 * 0.1).collect(),
            classes: 10,
            features: 4,
        };
        let x = FeatureMatrix::new(2, 4, vec![0.3; 8]).unwrap();
        let a = head.predict_all(&x);
        let b = head.predict_all(&x);
        assert_eq!(a, b);
        assert_eq!(a, vec![9, 9]); // bias dominates identical weights
    }

    #[test]
    fn invalid_options_rejected() {
        let (x, y) = separable_features(2, 2);
        let bad = TrainOptions { dropout: 1.0, ..Default::default() };
        assert!(train_classifier(&x, &y, &x, &y, &bad).is_err());
        let bad = TrainOptions { batch_size: 0, ..Default::default() };
        assert!(train_classifier(&x, &y, &x, &y, &bad).is_err());
    }
}
