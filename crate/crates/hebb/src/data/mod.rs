//! Dataset ingestion, whitening, augmentation, and deterministic
//! batching.

mod loaders;
mod zca;

pub use loaders::{load_cifar10, load_mnist, load_stl10};
pub use zca::{zca_apply, zca_fit, ZcaStats};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images in [0,1] with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor4<f32>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(images: Tensor4<f32>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.batch() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} images but {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Format(format!("label {l} out of range 0..=9")));
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Serialize to a simple binary container for bit-exact round-trips.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"HBDS")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&[match self.split {
            Split::Train => 0u8,
            Split::Test => 1u8,
        }])?;
        let (n, c, h, w) = self.images.shape();
        for dim in [n, c, h, w] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in self.images.data() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.labels)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"HBDS" {
            return Err(Error::Format("bad dataset container magic".into()));
        }
        let mut buf4 = [0u8; 4];
        input.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != 1 {
            return Err(Error::Format(format!("unsupported dataset container version {version}")));
        }
        let mut split_byte = [0u8; 1];
        input.read_exact(&mut split_byte)?;
        let split = match split_byte[0] {
            0 => Split::Train,
            1 => Split::Test,
            other => return Err(Error::Format(format!("bad split tag {other}"))),
        };
        let mut dims = [0usize; 4];
        for d in &mut dims {
            input.read_exact(&mut buf4)?;
            *d = u32::from_le_bytes(buf4) as usize;
        }
        let count = dims.iter().product::<usize>();
        let mut data = vec![0f32; count];
        for v in &mut data {
            input.read_exact(&mut buf4)?;
            *v = f32::from_le_bytes(buf4);
        }
        let mut labels = vec![0u8; dims[0]];
        input.read_exact(&mut labels)?;
        let images = Tensor4::from_vec(dims[0], dims[1], dims[2], dims[3], data)?;
        Self::new(images, labels, split)
    }
}

/// Mirror each image about its vertical axis independently with
/// probability `p`.
pub fn random_hflip(images: &Tensor4<f32>, p: f32, seed: u64) -> Tensor4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c, h, w) = images.shape();
    let mut out = images.clone();
    for b in 0..n {
        if rng.gen_range(0.0..1.0f32) < p {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        *out.at_mut(b, ch, y, x) = images.at(b, ch, y, w - 1 - x);
                    }
                }
            }
        }
    }
    out
}

/// Seeded random-permutation batch iterator; the final partial batch is
/// yielded.
pub struct Batches<'a> {
    dataset: &'a LabeledDataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

pub fn batches(dataset: &LabeledDataset, batch_size: usize, seed: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Ok(Batches {
        dataset,
        order,
        batch_size,
        cursor: 0,
    })
}

impl Iterator for Batches<'_> {
    type Item = (Tensor4<f32>, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        let (_, c, h, w) = self.dataset.images.shape();
        let mut images = Tensor4::zeros(idx.len(), c, h, w);
        let mut labels = Vec::with_capacity(idx.len());
        for (bi, &i) in idx.iter().enumerate() {
            images.image_mut(bi).copy_from_slice(self.dataset.images.image(i));
            labels.push(self.dataset.labels[i]);
        }
        Some((images, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> LabeledDataset {
        let images = Tensor4::from_fn(n, 1, 2, 2, |b, _, y, x| (b * 4 + y * 2 + x) as f32 / 255.0);
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        LabeledDataset::new(images, labels, Split::Train).unwrap()
    }

    #[test]
    fn dataset_validates_labels() {
        let images = Tensor4::zeros(2, 1, 2, 2);
        assert!(LabeledDataset::new(images.clone(), vec![0, 11], Split::Train).is_err());
        assert!(LabeledDataset::new(images.clone(), vec![0], Split::Train).is_err());
        assert!(LabeledDataset::new(images, vec![0, 9], Split::Train).is_ok());
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let ds = toy_dataset(7);
        let mut buf = Vec::new();
        ds.write_binary(&mut buf).unwrap();
        let back = LabeledDataset::read_binary(&buf[..]).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let ds = toy_dataset(2);
        let mut buf = Vec::new();
        ds.write_binary(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(LabeledDataset::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn hflip_identity_cases() {
        let ds = toy_dataset(5);
        let none = random_hflip(&ds.images, 0.0, 1);
        assert_eq!(none.data(), ds.images.data());
        let twice = random_hflip(&random_hflip(&ds.images, 1.0, 1), 1.0, 2);
        assert_eq!(twice.data(), ds.images.data());
    }

    #[test]
    fn hflip_mirrors_pixels() {
        let img = Tensor4::from_vec(1, 1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let flipped = random_hflip(&img, 1.0, 0);
        assert_eq!(flipped.data(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn hflip_seed_deterministic() {
        let ds = toy_dataset(32);
        let a = random_hflip(&ds.images, 0.5, 9);
        let b = random_hflip(&ds.images, 0.5, 9);
        assert_eq!(a.data(), b.data());
        let c = random_hflip(&ds.images, 0.5, 10);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn batches_partition_exactly() {
        let ds = toy_dataset(23);
        let mut seen = vec![0u32; 23];
        let mut count = 0;
        for (images, labels) in batches(&ds, 5, 3).unwrap() {
            count += 1;
            assert_eq!(images.batch(), labels.len());
            for bi in 0..images.batch() {
                // recover the source index from the first pixel
                let idx = (images.at(bi, 0, 0, 0) * 255.0).round() as usize / 4;
                seen[idx] += 1;
                assert_eq!(labels[bi], ds.labels[idx]);
            }
        }
        assert_eq!(count, 5); // 4 full batches + partial of 3
        assert!(seen.iter().all(|&v| v == 1));
    }

    #[test]
    fn batch_count_arithmetic() {
        let ds = toy_dataset(70_000 / 100); // 700 samples, batch 64
        let n_batches = batches(&ds, 64, 0).unwrap().count();
        assert_eq!(n_batches, 11); // ceil(700/64)
        // the quoted full-size case: 70000 images at batch 64
        assert_eq!((70_000usize).div_ceil(64), 1094);
    }

    #[test]
    fn batches_seed_deterministic() {
        let ds = toy_dataset(50);
        let a: Vec<Vec<u8>> = batches(&ds, 8, 7).unwrap().map(|(_, l)| l).collect();
        let b: Vec<Vec<u8>> = batches(&ds, 8, 7).unwrap().map(|(_, l)| l).collect();
        assert_eq!(a, b);
        let c: Vec<Vec<u8>> = batches(&ds, 8, 8).unwrap().map(|(_, l)| l).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let ds = toy_dataset(4);
        assert!(batches(&ds, 0, 0).is_err());
    }
}
