//! Majority-vote block resampling of binary masks.
//!
//! Aggregating 5 m pixels into 100 m cells (factor 20) by strict majority
//! removes isolated false positives: a lone urban pixel can never carry a
//! 400-pixel block.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Geotransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    /// Exactly half urban counts as non-urban.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResampleSpec {
    /// Block edge in input pixels.
    pub factor: usize,
    pub tie_rule: TieRule,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        // 5 m -> 100 m
        ResampleSpec { factor: 20, tie_rule: TieRule::Negative }
    }
}

impl ResampleSpec {
    pub fn with_factor(factor: usize) -> Self {
        ResampleSpec { factor, ..Self::default() }
    }
}

/// Downsamples by `factor`: each output pixel is 1 iff strictly more than
/// half of its block's pixels are 1. Partial border blocks use their actual
/// pixel count as the denominator. The geotransform is scaled so output
/// pixel centers sit at the center of their source block.
pub fn majority_resample(mask: &BinaryMask, spec: &ResampleSpec) -> Result<BinaryMask> {
    if spec.factor < 2 {
        return Err(Error::Argument(format!("resample factor {} must be >= 2", spec.factor)));
    }
    let f = spec.factor;
    let out_w = mask.width.div_ceil(f);
    let out_h = mask.height.div_ceil(f);
    let mut data = Vec::with_capacity(out_w * out_h);
    for by in 0..out_h {
        let y0 = by * f;
        let y1 = (y0 + f).min(mask.height);
        for bx in 0..out_w {
            let x0 = bx * f;
            let x1 = (x0 + f).min(mask.width);
            let mut ones = 0usize;
            for y in y0..y1 {
                let row = &mask.data[y * mask.width + x0..y * mask.width + x1];
                ones += row.iter().filter(|v| **v == 1).count();
            }
            let total = (y1 - y0) * (x1 - x0);
            data.push(u8::from(2 * ones > total));
        }
    }
    let geo = mask.geo.map(|g| {
        let center = (f as f64 - 1.0) / 2.0;
        let origin = g.pixel_to_world(center, center);
        Geotransform {
            origin_x: origin.0,
            origin_y: origin.1,
            pixel_w: g.pixel_w * f as f64,
            pixel_h: g.pixel_h * f as f64,
            rot_xy: g.rot_xy * f as f64,
            rot_yx: g.rot_yx * f as f64,
        }
    });
    BinaryMask::new(out_w, out_h, data, geo, mask.crs.clone())
}
