//! End-to-end gradient-descent comparison model: the same convolutional
//! stack as the feature-learning networks, trained throughout with Adam on
//! softmax cross-entropy via hand-written layer adjoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hebb::arch::NetworkSpec;
use hebb::classifier::{
    compute_metrics, cross_entropy_grad, lr_at_epoch, AdamState, EpochReport, LinearHead,
    TrainOptions,
};
use hebb::data::{batches, LabeledDataset};
use hebb::tensor::stack::{backward, forward, forward_cached, StackLayer};
use hebb::{Error, Result, Tensor4};

pub struct GradientModel {
    pub layers: Vec<StackLayer<f32>>,
    pub head: LinearHead,
}

impl GradientModel {
    /// Random-init stack plus a small random linear head (a zero head
    /// would pass no gradient into the stack).
    pub fn new(spec: &NetworkSpec, feature_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec.build_stack(&mut rng)?;
        let mut head = LinearHead::zeros(classes, feature_dim);
        let bound = 1.0 / (feature_dim as f32).sqrt();
        for v in &mut head.w {
            *v = rng.gen_range(-bound..bound);
        }
        Ok(Self { layers, head })
    }

    pub fn predict_batch(&self, x: &Tensor4<f32>) -> Result<Vec<u8>> {
        let top = forward(&self.layers, x)?;
        let n = top.batch();
        Ok((0..n).map(|i| self.head.predict(top.image(i))).collect())
    }

    fn weight_banks(&self) -> Vec<&Tensor4<f32>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                StackLayer::Conv { weights, .. } | StackLayer::DepthwiseConv { weights, .. } => Some(weights),
                _ => None,
            })
            .collect()
    }

    pub fn export_banks(&self) -> Vec<&Tensor4<f32>> {
        self.weight_banks()
    }
}

/// Train the full stack and head with Adam; mirrors the classifier phase's
/// schedule, dropout, and per-epoch evaluation of both splits.
pub fn train_end_to_end(
    model: &mut GradientModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    opts: &TrainOptions,
) -> Result<Vec<EpochReport>> {
    let d = model.head.features;
    let classes = model.head.classes;
    let mut adam_w = AdamState::new(model.head.w.len());
    let mut adam_b = AdamState::new(model.head.b.len());
    let mut adam_layers: Vec<Option<AdamState>> = model
        .layers
        .iter()
        .map(|l| match l {
            StackLayer::Conv { weights, .. } | StackLayer::DepthwiseConv { weights, .. } => {
                Some(AdamState::new(weights.len()))
            }
            _ => None,
        })
        .collect();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut reports = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let lr = lr_at_epoch(opts.base_lr, epoch);
        let mut loss_sum = 0.0f64;
        let mut batch_count = 0usize;
        for (x, labels) in batches(train, opts.batch_size, opts.seed.wrapping_add(epoch as u64))? {
            let acts = forward_cached(&model.layers, &x)?;
            let top = acts.last().unwrap();
            let n = top.batch();
            if top.len() / n != d {
                return Err(Error::Dimension(format!(
                    "stack produced {} features per image, head expects {d}",
                    top.len() / n
                )));
            }
            // inverted dropout on the flattened features
            let keep = 1.0 - opts.dropout;
            let mask: Vec<f32> = (0..top.len())
                .map(|_| {
                    if opts.dropout == 0.0 || dropout_rng.gen_range(0.0..1.0f32) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            let feats: Vec<f32> = top.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            let (loss, gw, gb) =
                cross_entropy_grad(&model.head.w, &model.head.b, classes, d, &feats, labels.as_slice())?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += loss as f64;
            batch_count += 1;
            // gradient into the features, then through the dropout mask
            let nf = n as f32;
            let mut gtop = Tensor4::zeros(top.batch(), top.channels(), top.height(), top.width());
            for i in 0..n {
                let xi = &feats[i * d..(i + 1) * d];
                let mut p: Vec<f32> = (0..classes)
                    .map(|k| {
                        model.head.b[k]
                            + model.head.w[k * d..(k + 1) * d]
                                .iter()
                                .zip(xi)
                                .map(|(a, b)| a * b)
                                .sum::<f32>()
                    })
                    .collect();
                let m = p.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let mut z = 0.0;
                for v in &mut p {
                    *v = (*v - m).exp();
                    z += *v;
                }
                for v in &mut p {
                    *v /= z;
                }
                p[labels[i] as usize] -= 1.0;
                let row = &mut gtop.data_mut()[i * d..(i + 1) * d];
                for (f, g) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..classes {
                        acc += p[k] * model.head.w[k * d + f];
                    }
                    *g = acc / nf * mask[i * d + f];
                }
            }
            let (_, layer_grads) = backward(&model.layers, &acts, &gtop)?;
            adam_w.step(&mut model.head.w, &gw, lr);
            adam_b.step(&mut model.head.b, &gb, lr);
            for ((layer, grad), adam) in model
                .layers
                .iter_mut()
                .zip(layer_grads)
                .zip(adam_layers.iter_mut())
            {
                if let (Some(g), Some(a)) = (grad, adam) {
                    match layer {
                        StackLayer::Conv { weights, .. } | StackLayer::DepthwiseConv { weights, .. } => {
                            a.step(weights.data_mut(), g.data(), lr);
                        }
                        _ => unreachable!("gradient for a weightless layer"),
                    }
                }
            }
        }
        let train_metrics = evaluate(model, train, opts.batch_size)?;
        let test_metrics = evaluate(model, test, opts.batch_size)?;
        reports.push(EpochReport {
            epoch,
            lr,
            train_loss: loss_sum / batch_count.max(1) as f64,
            train: train_metrics,
            test: test_metrics,
        });
    }
    Ok(reports)
}

fn evaluate(
    model: &GradientModel,
    data: &LabeledDataset,
    batch_size: usize,
) -> Result<hebb::classifier::MetricsReport> {
    let (total, c, h, w) = data.images.shape();
    let mut preds = Vec::with_capacity(total);
    let mut start = 0;
    while start < total {
        let end = (start + batch_size).min(total);
        let mut x = Tensor4::zeros(end - start, c, h, w);
        for (bi, i) in (start..end).enumerate() {
            x.image_mut(bi).copy_from_slice(data.images.image(i));
        }
        preds.extend(model.predict_batch(&x)?);
        start = end;
    }
    compute_metrics(&preds, &data.labels)
}
