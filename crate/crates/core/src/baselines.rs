//! Classical comparators: unsupervised k-means clustering and radiometric
//! luminance thresholding. Both are purely radiometric, so ink-shaped
//! distractors (text, roads, contours) land in the urban class and cap
//! their precision; they exist for head-to-head evaluation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};
use crate::seed;

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Convergence tolerance on centroid movement, in normalized RGB space.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 5, max_iters: 100, tol: 1e-4, seed: 0 }
    }
}

/// Thresholding configuration: a fixed 8-bit luminance cut, or a cut chosen
/// by maximizing inter-class variance of the luminance histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdConfig {
    Fixed { cut: u8 },
    Otsu,
}

#[inline]
fn luminance(px: &[u8]) -> f64 {
    0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])
}

fn check_rgb(img: &Raster) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::Argument("baseline segmentation expects an RGB raster".into()));
    }
    Ok(())
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// K-means segmentation in normalized RGB space: k-means++ seeding, Lloyd
/// iterations until convergence, then the non-empty cluster with the lowest
/// centroid luminance becomes the urban class.
pub fn kmeans_segment(img: &Raster, cfg: &KMeansConfig) -> Result<BinaryMask> {
    check_rgb(img)?;
    if cfg.k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {}", cfg.k)));
    }
    if cfg.max_iters < 1 {
        return Err(Error::Argument("max_iters must be >= 1".into()));
    }
    let n = img.width * img.height;
    let points: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let px = &img.data[i * 3..i * 3 + 3];
            [f64::from(px[0]) / 255.0, f64::from(px[1]) / 255.0, f64::from(px[2]) / 255.0]
        })
        .collect();

    let mut rng = seed::rng(seed::derive(cfg.seed, 0x4b4d4541));
    // k-means++ seeding.
    let mut centroids: Vec<[f64; 3]> = Vec::with_capacity(cfg.k);
    centroids.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < cfg.k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All mass already covered (fewer distinct colors than k).
            points[rng.random_range(0..n)]
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= *w;
            }
            points[chosen]
        };
        centroids.push(next);
        for (dd, p) in d2.iter_mut().zip(&points) {
            let nd = dist2(*p, next);
            if nd < *dd {
                *dd = nd;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..cfg.max_iters {
        // Assignment step; ties go to the lowest cluster index.
        for (a, p) in assign.iter_mut().zip(&points) {
            let mut best = 0usize;
            let mut best_d = dist2(*p, centroids[0]);
            for (ci, c) in centroids.iter().enumerate().skip(1) {
                let d = dist2(*p, *c);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            *a = best;
        }
        // Update step.
        let mut sums = vec![[0.0f64; 3]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (a, p) in assign.iter().zip(&points) {
            counts[*a] += 1;
            for (s, v) in sums[*a].iter_mut().zip(p) {
                *s += *v;
            }
        }
        // Re-seed empty clusters from the point farthest from its centroid.
        for ci in 0..cfg.k {
            if counts[ci] == 0 {
                let far = assign
                    .iter()
                    .zip(&points)
                    .enumerate()
                    .max_by(|(_, (a, p)), (_, (b, q))| {
                        dist2(**p, centroids[**a]).total_cmp(&dist2(**q, centroids[**b]))
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                sums[ci] = points[far];
                counts[ci] = 1;
            }
        }
        let mut movement = 0.0f64;
        for ci in 0..cfg.k {
            let c = [
                sums[ci][0] / counts[ci] as f64,
                sums[ci][1] / counts[ci] as f64,
                sums[ci][2] / counts[ci] as f64,
            ];
            movement = movement.max(dist2(c, centroids[ci]).sqrt());
            centroids[ci] = c;
        }
        if movement < cfg.tol {
            break;
        }
    }
    // Final assignment against the converged centroids.
    for (a, p) in assign.iter_mut().zip(&points) {
        let mut best = 0usize;
        let mut best_d = dist2(*p, centroids[0]);
        for (ci, c) in centroids.iter().enumerate().skip(1) {
            let d = dist2(*p, *c);
            if d < best_d {
                best_d = d;
                best = ci;
            }
        }
        *a = best;
    }
    let mut counts = vec![0usize; cfg.k];
    for a in &assign {
        counts[*a] += 1;
    }
    // Urban class: occupied cluster with the darkest centroid.
    let urban = (0..cfg.k)
        .filter(|ci| counts[*ci] > 0)
        .min_by(|a, b| {
            let la = 0.299 * centroids[*a][0] + 0.587 * centroids[*a][1] + 0.114 * centroids[*a][2];
            let lb = 0.299 * centroids[*b][0] + 0.587 * centroids[*b][1] + 0.114 * centroids[*b][2];
            la.total_cmp(&lb)
        })
        .expect("at least one occupied cluster");
    let data = assign.iter().map(|a| u8::from(*a == urban)).collect();
    BinaryMask::new(img.width, img.height, data, img.geo, img.crs.clone())
}

/// Luminance histogram of an RGB raster, bins rounded to nearest integer.
fn luminance_histogram(img: &Raster) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for i in 0..img.width * img.height {
        let l = luminance(&img.data[i * 3..i * 3 + 3]).round().clamp(0.0, 255.0) as usize;
        hist[l] += 1;
    }
    hist
}

/// Cut maximizing inter-class variance over splits `[0, c)` vs `[c, 255]`,
/// scanned exhaustively; the first maximum wins.
pub fn otsu_cut(img: &Raster) -> Result<u8> {
    check_rgb(img)?;
    let hist = luminance_histogram(img);
    let total: f64 = hist.iter().map(|h| *h as f64).sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(v, h)| v as f64 * *h as f64).sum();
    let mut best_cut = 1u32;
    let mut best_var = -1.0f64;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    for c in 1..=255u32 {
        let h = hist[(c - 1) as usize] as f64;
        w0 += h;
        sum0 += (c - 1) as f64 * h;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_cut = c;
        }
    }
    Ok(best_cut.min(255) as u8)
}

/// Luminance thresholding: mask 1 where luminance is strictly below the cut.
pub fn threshold_segment(img: &Raster, cfg: &ThresholdConfig) -> Result<BinaryMask> {
    check_rgb(img)?;
    let cut = match cfg {
        ThresholdConfig::Fixed { cut } => *cut,
        ThresholdConfig::Otsu => otsu_cut(img)?,
    };
    let data = (0..img.width * img.height)
        .map(|i| u8::from(luminance(&img.data[i * 3..i * 3 + 3]) < f64::from(cut)))
        .collect();
    BinaryMask::new(img.width, img.height, data, img.geo, img.crs.clone())
}
