//! Two-phase experiment driver: unsupervised feature learning followed by
//! supervised training of a linear head, per seed, with metrics and
//! analysis artifacts written to an output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hebb::arch::{hebbian_epoch, Network};
use hebb::checkpoint::save_weights;
use hebb::classifier::{train_classifier, EpochReport, FeatureMatrix, TrainOptions};
use hebb::data::{batches, load_cifar10, load_mnist, load_stl10, random_hflip, zca_apply, zca_fit, LabeledDataset};
use hebb::{Error, Result, Tensor4};

use crate::backprop::{train_end_to_end, GradientModel};
use crate::config::{ConfigFile, DatasetKind, ResolvedConfig};
use crate::visualize::{export_embeddings, export_receptive_field_direct, export_weight_histogram};

const FEATURE_BATCH: usize = 128;
const ZCA_EPS_DEFAULT: f64 = 1e-2;
const HISTOGRAM_BINS: usize = 64;
const EMBEDDING_SAMPLES: usize = 200;

/// Everything a run writes; each path exists when the run returns.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_csv: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub histograms: Vec<PathBuf>,
    pub receptive_fields: Vec<PathBuf>,
    pub embeddings: Vec<PathBuf>,
}

impl RunArtifacts {
    pub fn all_paths(&self) -> Vec<&PathBuf> {
        std::iter::once(&self.metrics_csv)
            .chain(&self.checkpoints)
            .chain(&self.histograms)
            .chain(&self.receptive_fields)
            .chain(&self.embeddings)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub resolved: ResolvedConfig,
    pub dataset: DatasetKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub hebbian_batch: usize,
    pub zca_eps: f64,
    pub classifier: TrainOptions,
}

impl RunRequest {
    /// Assemble a request from a parsed config file plus CLI overrides.
    pub fn from_config(
        file: &ConfigFile,
        seeds_override: &[u64],
        data_dir: Option<PathBuf>,
        out_override: Option<PathBuf>,
    ) -> Result<Self> {
        let (resolved, dataset) = file.resolve()?;
        let exp = &file.experiment;
        let seeds = if !seeds_override.is_empty() {
            seeds_override.to_vec()
        } else {
            exp.seeds.clone().unwrap_or_else(|| vec![0])
        };
        let out_dir = out_override
            .or_else(|| exp.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(sanitize(&resolved.name)));
        let data_dir = data_dir
            .or_else(|| std::env::var_os("DATA_DIR").map(PathBuf::from))
            .ok_or_else(|| Error::Parameter("no data directory (pass --data-dir or set DATA_DIR)".into()))?;
        let mut classifier = TrainOptions::default();
        if let Some(c) = &file.classifier {
            if let Some(v) = c.epochs {
                classifier.epochs = v;
            }
            if let Some(v) = c.base_lr {
                classifier.base_lr = v;
            }
            if let Some(v) = c.dropout {
                classifier.dropout = v;
            }
            if let Some(v) = c.batch_size {
                classifier.batch_size = v;
            }
        }
        Ok(Self {
            resolved,
            dataset,
            seeds,
            out_dir,
            data_dir,
            train_limit: exp.train_limit,
            test_limit: exp.test_limit,
            hebbian_batch: exp.hebbian_batch.unwrap_or(64),
            zca_eps: exp.zca_eps.unwrap_or(ZCA_EPS_DEFAULT),
            classifier,
        })
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c == '/' { '_' } else { c }).collect()
}

fn load_dataset(kind: DatasetKind, dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    match kind {
        DatasetKind::Mnist => load_mnist(dir),
        DatasetKind::Cifar10 => load_cifar10(dir),
        DatasetKind::Stl10 => load_stl10(dir),
    }
}

fn subset(ds: &LabeledDataset, limit: Option<usize>) -> LabeledDataset {
    let Some(n) = limit else { return ds.clone() };
    let n = n.min(ds.len());
    let (_, c, h, w) = ds.images.shape();
    let mut images = Tensor4::zeros(n, c, h, w);
    for i in 0..n {
        images.image_mut(i).copy_from_slice(ds.images.image(i));
    }
    LabeledDataset::new(images, ds.labels[..n].to_vec(), ds.split).unwrap()
}

/// Forward every image through the frozen network in fixed-order chunks.
fn extract_features(net: &Network, data: &LabeledDataset) -> Result<FeatureMatrix> {
    let (total, c, h, w) = data.images.shape();
    let mut out: Option<FeatureMatrix> = None;
    let mut start = 0;
    while start < total {
        let end = (start + FEATURE_BATCH).min(total);
        let mut x = Tensor4::zeros(end - start, c, h, w);
        for (bi, i) in (start..end).enumerate() {
            x.image_mut(bi).copy_from_slice(data.images.image(i));
        }
        let feats = FeatureMatrix::from_tensor(&net.forward_features(&x)?);
        match &mut out {
            Some(m) => m.extend_rows(&feats)?,
            None => out = Some(feats),
        }
        start = end;
    }
    out.ok_or_else(|| Error::Parameter("empty dataset".into()))
}

/// Replace every weight bank with the wide Gaussian draw used by soft
/// competition.
fn apply_soft_init(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bank in net.weight_banks_mut() {
        let (oc, ic, kh, kw) = bank.shape();
        *bank = hebb::hebbian::softwta_weight_init(oc, ic, kh, kw, &mut rng);
    }
}

fn write_metrics_header(out: &mut impl Write) -> Result<()> {
    writeln!(out, "config,seed,epoch,split,accuracy,precision,recall,f1,lr")?;
    Ok(())
}

fn write_metrics_rows(out: &mut impl Write, name: &str, seed: u64, reports: &[EpochReport]) -> Result<()> {
    for r in reports {
        for (split, m) in [("train", &r.train), ("test", &r.test)] {
            writeln!(
                out,
                "{name},{seed},{epoch},{split},{acc:.6},{prec:.6},{rec:.6},{f1:.6},{lr:.8}",
                epoch = r.epoch,
                acc = m.accuracy,
                prec = m.macro_precision,
                rec = m.macro_recall,
                f1 = m.macro_f1,
                lr = r.lr,
            )?;
        }
    }
    Ok(())
}

/// Run every seed of an experiment and write metrics plus artifacts.
pub fn run_experiment(req: &RunRequest) -> Result<RunArtifacts> {
    fs::create_dir_all(&req.out_dir)?;
    let (train_full, test_full) = load_dataset(req.dataset, &req.data_dir)?;
    let train_base = subset(&train_full, req.train_limit);
    let test_base = subset(&test_full, req.test_limit);
    drop((train_full, test_full));

    let metrics_csv = req.out_dir.join("metrics.csv");
    let mut metrics = BufWriter::new(File::create(&metrics_csv)?);
    write_metrics_header(&mut metrics)?;

    let mut artifacts = RunArtifacts {
        metrics_csv: metrics_csv.clone(),
        checkpoints: Vec::new(),
        histograms: Vec::new(),
        receptive_fields: Vec::new(),
        embeddings: Vec::new(),
    };

    for &seed in &req.seeds {
        let (reports, banks, net_for_embed) = run_seed(req, &train_base, &test_base, seed)?;
        write_metrics_rows(&mut metrics, &req.resolved.name, seed, &reports)?;

        let ckpt = req.out_dir.join(format!("weights-seed{seed}.hbwt"));
        save_weights(&ckpt, &banks.iter().collect::<Vec<_>>())?;
        artifacts.checkpoints.push(ckpt);

        for (i, bank) in banks.iter().enumerate() {
            let path = req.out_dir.join(format!("hist-seed{seed}-layer{i}.csv"));
            export_weight_histogram(bank, HISTOGRAM_BINS, &path)?;
            artifacts.histograms.push(path);
        }

        if let Some(first) = banks.first() {
            let ic = first.channels();
            if ic == 1 || ic == 3 {
                let path = req.out_dir.join(format!("filters-seed{seed}.ppm"));
                export_receptive_field_direct(first, &path)?;
                artifacts.receptive_fields.push(path);
            }
        }

        if let Some(net) = net_for_embed {
            let path = req.out_dir.join(format!("embeddings-seed{seed}.csv"));
            export_embeddings(&net, &test_base, EMBEDDING_SAMPLES, seed, &path)?;
            artifacts.embeddings.push(path);
        }
    }
    metrics.flush()?;

    for p in artifacts.all_paths() {
        let meta = fs::metadata(p)?;
        if meta.len() == 0 {
            return Err(Error::Io(std::io::Error::other(format!(
                "artifact {} is empty",
                p.display()
            ))));
        }
    }
    Ok(artifacts)
}

/// One seed's full protocol; returns per-epoch reports, the final weight
/// banks, and (for the two-phase path) the frozen network.
fn run_seed(
    req: &RunRequest,
    train_base: &LabeledDataset,
    test_base: &LabeledDataset,
    seed: u64,
) -> Result<(Vec<EpochReport>, Vec<Tensor4<f32>>, Option<Network>)> {
    // augmentation on the training pass only; flips are meaningless for digits
    let mut train = train_base.clone();
    if req.dataset.flip_augment() {
        train.images = random_hflip(&train.images, 0.5, seed.wrapping_add(17));
    }
    let mut test = test_base.clone();
    if req.resolved.zca {
        let stats = zca_fit(&train, req.zca_eps)?;
        train.images = zca_apply(&stats, &train.images)?;
        test.images = zca_apply(&stats, &test.images)?;
    }

    let mut opts = req.classifier.clone();
    opts.seed = seed;

    if req.resolved.backprop {
        let (_, c, h, w) = train.images.shape();
        let dims = req.resolved.spec.shapes_for(h, w)?;
        let (fc, fh, fw) = *dims.last().ok_or_else(|| Error::Parameter("empty network".into()))?;
        let _ = c;
        let mut model = GradientModel::new(&req.resolved.spec, fc * fh * fw, 10, seed)?;
        let reports = train_end_to_end(&mut model, &train, &test, &opts)?;
        let banks = model.export_banks().into_iter().cloned().collect();
        return Ok((reports, banks, None));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(&req.resolved.spec, &req.resolved.layer_configs, &mut rng)?;
    if req.resolved.soft_init {
        apply_soft_init(&mut net, seed.wrapping_add(29));
    }
    hebbian_epoch(&mut net, batches(&train, req.hebbian_batch, seed)?.map(|(x, _)| x))?;

    let train_x = extract_features(&net, &train)?;
    let test_x = extract_features(&net, &test)?;
    let (_, reports) = train_classifier(&train_x, &train.labels, &test_x, &test.labels, &opts)?;
    let banks: Vec<Tensor4<f32>> = net.weight_banks().into_iter().cloned().collect();
    Ok((reports, banks, Some(net)))
}

/// Mean test accuracy over the last `window` epochs of a report series.
pub fn tail_mean_accuracy(reports: &[EpochReport], window: usize) -> f64 {
    let tail = &reports[reports.len().saturating_sub(window)..];
    tail.iter().map(|r| r.test.accuracy).sum::<f64>() / tail.len().max(1) as f64
}

/// Also used by the configuration dry-run check: resolve, instantiate, and
/// push one tiny batch through the network (or gradient model).
pub fn dry_run(resolved: &ResolvedConfig, input_size: usize) -> Result<()> {
    let ch = resolved.spec.input_channels;
    let x = Tensor4::from_fn(2, ch, input_size, input_size, |b, c, y, xx| {
        ((b + c + y + xx) as f32 * 0.37).sin() * 0.5
    });
    if resolved.backprop {
        let dims = resolved.spec.shapes_for(input_size, input_size)?;
        let (fc, fh, fw) = *dims.last().unwrap();
        let model = GradientModel::new(&resolved.spec, fc * fh * fw, 10, 0)?;
        model.predict_batch(&x)?;
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Network::new(&resolved.spec, &resolved.layer_configs, &mut rng)?;
    let y = net.hebbian_batch(&x)?;
    if !y.all_finite() {
        return Err(Error::Numeric("non-finite activations in dry run".into()));
    }
    net.freeze();
    net.forward_features(&x)?;
    Ok(())
}
