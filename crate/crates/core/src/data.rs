//! Dataset discovery, image/mask pairing, preprocessing, deterministic
//! splitting, and batch assembly.
//!
//! Pairing is structural: both directory listings are sorted
//! lexicographically and zipped index-wise, and the listing lengths must
//! agree. Images resize bilinearly (half-pixel-center alignment) and scale
//! to [0,1] by /255; masks resize by nearest neighbor and binarize by a
//! strict `> 128` on the 8-bit value.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};
use crate::seed;
use crate::tensor::Tensor;

const SPLIT_STREAM: u64 = 0x53504c49;
const BATCH_STREAM: u64 = 0x42415443;

/// One image/mask pairing on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

/// One loaded training sample: image tensor in [0,1] and binary target.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub mask: BinaryMask,
}

/// Train/validation split parameters.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.8, seed: 0 }
    }
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Sorts both listings and zips them index-wise.
pub fn discover_pairs(image_dir: impl AsRef<Path>, mask_dir: impl AsRef<Path>) -> Result<Vec<SamplePair>> {
    let images = sorted_files(image_dir.as_ref())?;
    let masks = sorted_files(mask_dir.as_ref())?;
    if images.len() != masks.len() {
        return Err(Error::Pairing(format!(
            "{} images vs {} masks; listings must pair one-to-one",
            images.len(),
            masks.len()
        )));
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no files under {}",
            image_dir.as_ref().display()
        )));
    }
    Ok(images
        .into_iter()
        .zip(masks)
        .map(|(image_path, mask_path)| SamplePair { image_path, mask_path })
        .collect())
}

/// Bilinear resize of one channel plane with half-pixel-center alignment.
fn resize_bilinear_plane(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for dy in 0..dh {
        let py = (dy as f64 + 0.5) * sy - 0.5;
        let y0 = py.floor();
        let fy = py - y0;
        let i0 = (y0 as isize).clamp(0, sh as isize - 1) as usize;
        let i1 = (y0 as isize + 1).clamp(0, sh as isize - 1) as usize;
        for dx in 0..dw {
            let px = (dx as f64 + 0.5) * sx - 0.5;
            let x0 = px.floor();
            let fx = px - x0;
            let j0 = (x0 as isize).clamp(0, sw as isize - 1) as usize;
            let j1 = (x0 as isize + 1).clamp(0, sw as isize - 1) as usize;
            let top = src[i0 * sw + j0] * (1.0 - fx) + src[i0 * sw + j1] * fx;
            let bot = src[i1 * sw + j0] * (1.0 - fx) + src[i1 * sw + j1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Nearest-neighbor resize of one channel plane, half-pixel-center mapping.
fn resize_nearest_plane(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<u8> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for dy in 0..dh {
        let iy = (((dy as f64 + 0.5) * sy).floor() as usize).min(sh - 1);
        for dx in 0..dw {
            let ix = (((dx as f64 + 0.5) * sx).floor() as usize).min(sw - 1);
            out.push(src[iy * sw + ix]);
        }
    }
    out
}

/// Full-resolution raster to a [0,1] tensor (no resize).
pub fn raster_to_tensor(r: &Raster) -> Tensor {
    let plane = r.width * r.height;
    let mut data = vec![0.0; r.channels * plane];
    for y in 0..r.height {
        for x in 0..r.width {
            let px = r.pixel(x, y);
            for (c, v) in px.iter().enumerate() {
                data[c * plane + y * r.width + x] = f64::from(*v) / 255.0;
            }
        }
    }
    Tensor::from_data(r.channels, r.height, r.width, data)
}

/// Mask to a single-channel tensor of exact {0.0, 1.0} values.
pub fn mask_to_tensor(m: &BinaryMask) -> Tensor {
    Tensor::from_data(1, m.height, m.width, m.data.iter().map(|v| f64::from(*v)).collect())
}

/// Loads and preprocesses one pair at `target x target` pixels.
pub fn load_sample(pair: &SamplePair, target: usize) -> Result<Sample> {
    if target == 0 {
        return Err(Error::Argument("target size must be positive".into()));
    }
    let img = Raster::read(&pair.image_path)?;
    let plane = img.width * img.height;
    let mut channels = Vec::with_capacity(img.channels);
    for c in 0..img.channels {
        let src: Vec<f64> = (0..plane)
            .map(|i| f64::from(img.data[i * img.channels + c]))
            .collect();
        channels.push(resize_bilinear_plane(&src, img.width, img.height, target, target));
    }
    let mut data = Vec::with_capacity(img.channels * target * target);
    for ch in channels {
        data.extend(ch.into_iter().map(|v| v / 255.0));
    }
    let image = Tensor::from_data(img.channels, target, target, data);

    let mask_raw = Raster::read(&pair.mask_path)?;
    if mask_raw.channels != 1 {
        return Err(Error::Pairing(format!(
            "mask {} must be single-channel",
            pair.mask_path.display()
        )));
    }
    let resized = resize_nearest_plane(&mask_raw.data, mask_raw.width, mask_raw.height, target, target);
    let mask = BinaryMask::new(
        target,
        target,
        resized.into_iter().map(|v| u8::from(v > 128)).collect(),
        None,
        None,
    )?;
    Ok(Sample { image, mask })
}

/// Deterministic shuffle, then the first `floor(train_fraction * N)` pairs
/// train and the remainder validate.
pub fn split_dataset(pairs: &[SamplePair], spec: &SplitSpec) -> Result<(Vec<SamplePair>, Vec<SamplePair>)> {
    if pairs.len() < 2 {
        return Err(Error::Argument(format!("need at least 2 pairs to split, got {}", pairs.len())));
    }
    if !(0.0 < spec.train_fraction && spec.train_fraction < 1.0) {
        return Err(Error::Argument(format!("train fraction {} outside (0, 1)", spec.train_fraction)));
    }
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = seed::rng(seed::derive(spec.seed, SPLIT_STREAM));
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (spec.train_fraction * pairs.len() as f64).floor() as usize;
    let train = indices[..n_train].iter().map(|i| pairs[*i].clone()).collect();
    let val = indices[n_train..].iter().map(|i| pairs[*i].clone()).collect();
    Ok((train, val))
}

/// Per-epoch batch order over sample indices `0..n`; the final short batch
/// is retained. Reshuffled deterministically per `(seed, epoch)`.
pub fn make_batches(n: usize, batch_size: usize, seed_value: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be >= 1".into()));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed::derive(seed_value, BATCH_STREAM), epoch as u64));
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// SHA-256 over the sorted relative paths and contents of every file under
/// `dir` (recursive); hex-encoded. Stable across platforms and enumeration
/// order.
pub fn dataset_hash(dir: impl AsRef<Path>) -> Result<String> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let root = dir.as_ref();
    let mut files = Vec::new();
    walk(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for path in &files {
        let rel = path.strip_prefix(root).unwrap_or(path);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
