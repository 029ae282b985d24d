//! Binary dataset readers: IDX images/labels, 3073-byte CIFAR-10
//! records, and column-major STL-10 records.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

use super::{LabeledDataset, Split};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))
}

fn be_u32(buf: &[u8], offset: usize) -> Result<u32> {
    let bytes: [u8; 4] = buf
        .get(offset..offset + 4)
        .ok_or_else(|| Error::Format("truncated header".into()))?
        .try_into()
        .unwrap();
    Ok(u32::from_be_bytes(bytes))
}

/// Parse one IDX image file (big-endian magic 2051) into (n, 1, h, w)
/// pixels scaled to [0,1].
fn parse_idx_images(buf: &[u8]) -> Result<Tensor4<f32>> {
    let magic = be_u32(buf, 0)?;
    if magic != 2051 {
        return Err(Error::Format(format!("bad image magic {magic}, expected 2051")));
    }
    let n = be_u32(buf, 4)? as usize;
    let h = be_u32(buf, 8)? as usize;
    let w = be_u32(buf, 12)? as usize;
    let body = &buf[16..];
    if body.len() != n * h * w {
        return Err(Error::Format(format!(
            "image payload {} bytes, expected {}",
            body.len(),
            n * h * w
        )));
    }
    let data = body.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor4::from_vec(n, 1, h, w, data)
}

/// Parse one IDX label file (big-endian magic 2049).
fn parse_idx_labels(buf: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(buf, 0)?;
    if magic != 2049 {
        return Err(Error::Format(format!("bad label magic {magic}, expected 2049")));
    }
    let n = be_u32(buf, 4)? as usize;
    let body = &buf[8..];
    if body.len() != n {
        return Err(Error::Format(format!("label payload {} bytes, expected {n}", body.len())));
    }
    Ok(body.to_vec())
}

fn idx_split(dir: &Path, images: &str, labels: &str, split: Split) -> Result<LabeledDataset> {
    let images = parse_idx_images(&read_file(&dir.join(images))?)?;
    let labels = parse_idx_labels(&read_file(&dir.join(labels))?)?;
    LabeledDataset::new(images, labels, split)
}

/// Read the IDX-format pair of splits: 28x28 greyscale digits.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let train = idx_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::Train)?;
    let test = idx_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::Test)?;
    Ok((train, test))
}

const CIFAR_RECORD: usize = 3073; // 1 label byte + 3 * 32 * 32 pixels

fn parse_cifar_records(buf: &[u8], images: &mut Vec<f32>, labels: &mut Vec<u8>) -> Result<()> {
    if buf.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format(format!(
            "file length {} is not a multiple of the {CIFAR_RECORD}-byte record",
            buf.len()
        )));
    }
    for record in buf.chunks_exact(CIFAR_RECORD) {
        labels.push(record[0]);
        // R, G, B planes follow the label byte in row-major order
        images.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(())
}

/// Read the binary batch files: 32x32 RGB, one label byte then three
/// row-major color planes per record.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let mut train_images = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        let path: PathBuf = dir.join(format!("data_batch_{i}.bin"));
        parse_cifar_records(&read_file(&path)?, &mut train_images, &mut train_labels)?;
    }
    let mut test_images = Vec::new();
    let mut test_labels = Vec::new();
    parse_cifar_records(&read_file(&dir.join("test_batch.bin"))?, &mut test_images, &mut test_labels)?;
    let train = LabeledDataset::new(
        Tensor4::from_vec(train_labels.len(), 3, 32, 32, train_images)?,
        train_labels,
        Split::Train,
    )?;
    let test = LabeledDataset::new(
        Tensor4::from_vec(test_labels.len(), 3, 32, 32, test_images)?,
        test_labels,
        Split::Test,
    )?;
    Ok((train, test))
}

const STL_PIXELS: usize = 3 * 96 * 96;

fn parse_stl_split(dir: &Path, images: &str, labels: &str, split: Split) -> Result<LabeledDataset> {
    let img_buf = read_file(&dir.join(images))?;
    let label_buf = read_file(&dir.join(labels))?;
    if img_buf.len() % STL_PIXELS != 0 {
        return Err(Error::Format(format!(
            "image file length {} is not a multiple of {STL_PIXELS}",
            img_buf.len()
        )));
    }
    let n = img_buf.len() / STL_PIXELS;
    if label_buf.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", label_buf.len())));
    }
    // per channel, pixels are stored column-major: source index
    // c*96*96 + x*96 + y maps to (c, y, x)
    let mut tensor = Tensor4::zeros(n, 3, 96, 96);
    for b in 0..n {
        let rec = &img_buf[b * STL_PIXELS..(b + 1) * STL_PIXELS];
        for c in 0..3 {
            for y in 0..96 {
                for x in 0..96 {
                    *tensor.at_mut(b, c, y, x) = rec[c * 9216 + x * 96 + y] as f32 / 255.0;
                }
            }
        }
    }
    // labels on disk run 1..=10
    let labels: Vec<u8> = label_buf
        .iter()
        .map(|&l| {
            if (1..=10).contains(&l) {
                Ok(l - 1)
            } else {
                Err(Error::Format(format!("label {l} outside 1..=10")))
            }
        })
        .collect::<Result<_>>()?;
    LabeledDataset::new(tensor, labels, split)
}

/// Read the labeled binary splits: 96x96 RGB stored column-major per
/// channel, labels 1..=10 on disk.
pub fn load_stl10(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let train = parse_stl_split(dir, "train_X.bin", "train_y.bin", Split::Train)?;
    let test = parse_stl_split(dir, "test_X.bin", "test_y.bin", Split::Test)?;
    Ok((train, test))
}
