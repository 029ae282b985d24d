//! Analysis exports: gradient-ascent receptive fields, weight histograms,
//! direct filter images, and feature embeddings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hebb::arch::{Network, NetworkSpec};
use hebb::data::LabeledDataset;
use hebb::tensor::stack::{conv_stack_input_gradient, StackLayer};
use hebb::{Error, Result, Tensor4};

/// Gradient-ascent settings; defaults chosen for stable convergence.
#[derive(Debug, Clone, Copy)]
pub struct PgaOptions {
    pub steps: usize,
    pub eta: f32,
    pub lambda: f32,
}

impl Default for PgaOptions {
    fn default() -> Self {
        Self { steps: 200, eta: 1.0, lambda: 1e-3 }
    }
}

/// Rebuild a frozen layer stack from a spec and a saved weight checkpoint.
pub fn stack_with_weights(spec: &NetworkSpec, banks: &[Tensor4<f32>]) -> Result<Vec<StackLayer<f32>>> {
    // the random init is immediately overwritten by the checkpoint banks
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layers = spec.build_stack(&mut rng)?;
    let mut bank = 0;
    for layer in &mut layers {
        let slot = match layer {
            StackLayer::Conv { weights, .. } => Some(weights),
            StackLayer::DepthwiseConv { weights, .. } => Some(weights),
            _ => None,
        };
        if let Some(w) = slot {
            let loaded = banks.get(bank).ok_or_else(|| {
                Error::Dimension(format!("checkpoint has only {} weight banks", banks.len()))
            })?;
            if loaded.shape() != w.shape() {
                return Err(Error::Dimension(format!(
                    "checkpoint bank {bank} shape {:?} does not match the architecture's {:?}",
                    loaded.shape(),
                    w.shape()
                )));
            }
            *w = loaded.clone();
            bank += 1;
        }
    }
    if bank != banks.len() {
        return Err(Error::Dimension(format!(
            "checkpoint has {} weight banks but the architecture uses {bank}",
            banks.len()
        )));
    }
    Ok(layers)
}

/// Optimize an input image to maximize one channel's mean activation at
/// the top of `layers`: ascend the normalized gradient with L2 shrinkage,
/// clamping to [-1, 1] after every step.
pub fn pga_optimize(
    layers: &[StackLayer<f32>],
    channel: usize,
    in_channels: usize,
    size: usize,
    opts: &PgaOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor4<f32>> {
    let mut img = Tensor4::from_fn(1, in_channels, size, size, |_, _, _, _| rng.gen_range(-0.01..0.01f32));
    for _ in 0..opts.steps {
        let g = conv_stack_input_gradient(layers, &img, channel)?;
        let norm = g.data().iter().map(|v| v * v).sum::<f32>().sqrt();
        let scale = if norm > 0.0 { opts.eta / norm } else { 0.0 };
        for (p, &gv) in img.data_mut().iter_mut().zip(g.data()) {
            *p = (*p + scale * gv - opts.lambda * *p).clamp(-1.0, 1.0);
        }
    }
    Ok(img)
}

/// Run gradient-ascent images for the first `min(25, channels)` channels
/// and write them as a 5x5 tile grid.
pub fn pga_receptive_field(
    layers: &[StackLayer<f32>],
    channels: usize,
    in_channels: usize,
    size: usize,
    opts: &PgaOptions,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let count = channels.min(25);
    let mut tiles = Vec::with_capacity(count);
    for ch in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ch as u64));
        tiles.push(pga_optimize(layers, ch, in_channels, size, opts, &mut rng)?);
    }
    write_tile_grid(&tiles, path)
}

/// Per-filter min-max normalized images of a weight bank's first
/// `min(25, filters)` filters.
pub fn export_receptive_field_direct(bank: &Tensor4<f32>, path: &Path) -> Result<()> {
    let (oc, ic, kh, kw) = bank.shape();
    if ic != 1 && ic != 3 {
        return Err(Error::Capability(format!(
            "direct filter images need 1 or 3 input channels, bank has {ic}"
        )));
    }
    let count = oc.min(25);
    let mut tiles = Vec::with_capacity(count);
    for f in 0..count {
        let mut t = Tensor4::zeros(1, ic, kh, kw);
        for c in 0..ic {
            for y in 0..kh {
                for x in 0..kw {
                    *t.at_mut(0, c, y, x) = bank.at(f, c, y, x);
                }
            }
        }
        tiles.push(t);
    }
    write_tile_grid(&tiles, path)
}

/// Histogram of a weight bank: evenly spaced bins over [min, max]; a
/// constant bank occupies a single bin.
pub fn weight_histogram(bank: &Tensor4<f32>, bins: usize) -> Result<Vec<(f32, usize)>> {
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let lo = bank.data().iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = bank.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let width = (hi - lo) / bins as f32;
    let mut counts = vec![0usize; bins];
    for &v in bank.data() {
        let idx = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + (i as f32 + 0.5) * width, c))
        .collect())
}

pub fn export_weight_histogram(bank: &Tensor4<f32>, bins: usize, path: &Path) -> Result<()> {
    let hist = weight_histogram(bank, bins)?;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "bin_center,count")?;
    for (center, count) in hist {
        writeln!(out, "{center:.6},{count}")?;
    }
    Ok(())
}

/// One CSV row per sampled image: label then the flattened feature vector.
pub fn export_embeddings(
    net: &Network,
    data: &LabeledDataset,
    count: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let n = data.len().min(count);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order.truncate(n);
    let (_, c, h, w) = data.images.shape();
    let mut out = BufWriter::new(File::create(path)?);
    for &i in &order {
        let mut x = Tensor4::zeros(1, c, h, w);
        x.image_mut(0).copy_from_slice(data.images.image(i));
        let feat = net.forward_features(&x)?;
        write!(out, "{}", data.labels[i])?;
        for v in feat.data() {
            write!(out, ",{v:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PPM image output
// ---------------------------------------------------------------------------

/// Write an 8-bit RGB image as binary PPM.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Dimension(format!(
            "ppm buffer has {} bytes for {width}x{height}",
            rgb.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{width} {height}\n255\n")?;
    out.write_all(rgb)?;
    Ok(())
}

/// Arrange single-image tensors (1 or 3 channels) into a 5-column tile
/// grid with per-tile min-max normalization and 1-pixel separators.
pub fn write_tile_grid(tiles: &[Tensor4<f32>], path: &Path) -> Result<()> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Parameter("no tiles to write".into()))?;
    let (_, c, th, tw) = first.shape();
    let cols = tiles.len().min(5);
    let rows = tiles.len().div_ceil(cols);
    let width = cols * (tw + 1) - 1;
    let height = rows * (th + 1) - 1;
    let mut rgb = vec![0u8; width * height * 3];
    for (i, tile) in tiles.iter().enumerate() {
        if tile.shape() != first.shape() {
            return Err(Error::Dimension("tiles must share one shape".into()));
        }
        let lo = tile.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = tile.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
        let (row, col) = (i / cols, i % cols);
        let (oy, ox) = (row * (th + 1), col * (tw + 1));
        for y in 0..th {
            for x in 0..tw {
                let px = ((oy + y) * width + ox + x) * 3;
                for ch in 0..3 {
                    let v = tile.at(0, if c == 3 { ch } else { 0 }, y, x);
                    // constant tiles render as mid-gray
                    let byte = if scale > 0.0 { ((v - lo) * scale) as u8 } else { 128 };
                    rgb[px + ch] = byte;
                }
            }
        }
    }
    write_ppm(path, width, height, &rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hebb::tensor::ConvGeometry;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("hebb-vis-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn histogram_counts_sum_to_total() {
        let bank = Tensor4::from_vec(2, 1, 2, 2, vec![-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 0.1]).unwrap();
        let hist = weight_histogram(&bank, 4).unwrap();
        assert_eq!(hist.iter().map(|(_, c)| c).sum::<usize>(), 8);
    }

    #[test]
    fn constant_bank_occupies_one_bin() {
        let bank = Tensor4::from_vec(1, 1, 2, 2, vec![0.0; 4]).unwrap();
        let hist = weight_histogram(&bank, 8).unwrap();
        let occupied: Vec<_> = hist.iter().filter(|(_, c)| *c > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].1, 4usize);
    }

    #[test]
    fn histogram_matches_direct_counting() {
        let vals: Vec<f32> = (0..40).map(|i| (i as f32 * 0.37).sin()).collect();
        let bank = Tensor4::from_vec(5, 2, 2, 2, vals.clone()).unwrap();
        let bins = 7;
        let hist = weight_histogram(&bank, bins).unwrap();
        let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let width = (hi - lo) / bins as f32;
        for (b, &(center, count)) in hist.iter().enumerate() {
            let expect = vals
                .iter()
                .filter(|&&v| {
                    let idx = (((v - lo) / width) as usize).min(bins - 1);
                    idx == b
                })
                .count();
            assert_eq!(count, expect, "bin {b}");
            assert!((center - (lo + (b as f32 + 0.5) * width)).abs() < 1e-6);
        }
    }

    #[test]
    fn pga_zero_gradient_is_a_fixed_point() {
        // zero weights: the objective is flat, lambda 0 leaves the image alone
        let geom = ConvGeometry::square(1, 2, 3, 1, 1);
        let layers = vec![StackLayer::Conv { weights: Tensor4::zeros(2, 1, 3, 3), geom }];
        let opts = PgaOptions { steps: 5, eta: 1.0, lambda: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = pga_optimize(&layers, 0, 1, 6, &opts, &mut rng).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let init = Tensor4::from_fn(1, 1, 6, 6, |_, _, _, _| rng2.gen_range(-0.01..0.01f32));
        assert_eq!(img.data(), init.data());
    }

    #[test]
    fn pga_eta_zero_decays_exponentially() {
        let geom = ConvGeometry::square(1, 1, 3, 1, 1);
        let layers = vec![StackLayer::Conv { weights: Tensor4::zeros(1, 1, 3, 3), geom }];
        let lambda = 0.1;
        let steps = 4;
        let opts = PgaOptions { steps, eta: 0.0, lambda };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = pga_optimize(&layers, 0, 1, 4, &opts, &mut rng).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let init = Tensor4::from_fn(1, 1, 4, 4, |_, _, _, _| rng2.gen_range(-0.01..0.01f32));
        let factor = (1.0 - lambda).powi(steps as i32);
        for (a, b) in img.data().iter().zip(init.data()) {
            assert!((a - b * factor).abs() < 1e-6);
        }
    }

    #[test]
    fn pga_ascends_a_linear_objective() {
        use hebb::tensor::stack::stack_objective;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor4::from_vec(1, 1, 3, 3, (0..9).map(|i| ((i as f32) * 0.7).sin()).collect()).unwrap();
        let geom = ConvGeometry::square(1, 1, 3, 1, 1);
        let layers = vec![StackLayer::Conv { weights: w, geom }];
        let opts = PgaOptions { steps: 50, eta: 0.05, lambda: 0.0 };
        let img0 = Tensor4::from_fn(1, 1, 6, 6, |_, _, _, _| rng.gen_range(-0.01..0.01f32));
        let a0 = stack_objective(&layers, &img0, 0).unwrap();
        let mut rng_same = ChaCha8Rng::seed_from_u64(3);
        let img = pga_optimize(&layers, 0, 1, 6, &opts, &mut rng_same).unwrap();
        let a1 = stack_objective(&layers, &img, 0).unwrap();
        assert!(a1 > a0, "{a0} -> {a1}");
    }

    #[test]
    fn tile_grid_has_expected_dimensions() {
        let tiles: Vec<Tensor4<f32>> = (0..7)
            .map(|i| Tensor4::from_fn(1, 3, 5, 5, |_, c, y, x| (i + c + y + x) as f32))
            .collect();
        let path = tmp("grid.ppm");
        write_tile_grid(&tiles, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // 5 cols x 2 rows of 5x5 tiles with 1px separators: 29 x 11
        assert!(bytes.starts_with(b"P6\n29 11\n255\n"));
        assert_eq!(bytes.len(), b"P6\n29 11\n255\n".len() + 29 * 11 * 3);
    }

    #[test]
    fn direct_filters_normalize_min_to_zero_max_to_255() {
        let bank = Tensor4::from_vec(1, 1, 2, 2, vec![-2.0, 0.0, 1.0, 6.0]).unwrap();
        let path = tmp("direct.ppm");
        export_receptive_field_direct(&bank, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P6\n2 2\n255\n";
        let pix = &bytes[header.len()..];
        assert_eq!(pix[0], 0); // min maps to 0
        assert_eq!(pix[pix.len() - 1], 255); // max maps to 255
    }
}
