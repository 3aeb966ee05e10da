//! Pixel-wise segmentation metrics: confusion counts, precision, recall,
//! F1, IoU, and overall accuracy. Urban (1) is the positive class.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub overall_accuracy: f64,
    pub counts: ConfusionCounts,
}

/// Per-pixel tally of `pred` against `truth`.
pub fn confuse(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(Error::Argument(format!(
            "mask dims differ: {}x{} vs {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.data.iter().zip(&truth.data) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Derives all metrics from counts.
///
/// Zero-denominator convention: with no positives anywhere
/// (`tp+fp+fn = 0`) precision, recall, F1, and IoU are all 1 (vacuously
/// perfect); otherwise a metric whose own denominator is zero is 0.
pub fn metrics(c: &ConfusionCounts) -> Result<MetricReport> {
    if c.total() == 0 {
        return Err(Error::Argument("cannot compute metrics over zero pixels".into()));
    }
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let overall_accuracy = (tp + tn) / c.total() as f64;
    if c.tp + c.fp + c.fn_ == 0 {
        return Ok(MetricReport {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            iou: 1.0,
            overall_accuracy,
            counts: *c,
        });
    }
    let precision = if c.tp + c.fp == 0 { 0.0 } else { tp / (tp + fp) };
    let recall = if c.tp + c.fn_ == 0 { 0.0 } else { tp / (tp + fn_) };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let iou = tp / (tp + fp + fn_);
    Ok(MetricReport { precision, recall, f1, iou, overall_accuracy, counts: *c })
}

/// Confusion counting and metric derivation in one step.
pub fn evaluate_scene(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricReport> {
    metrics(&confuse(pred, truth)?)
}

pub const REPORT_CSV_HEADER: &str = "scene,tp,fp,fn,tn,precision,recall,f1,iou,oa";

impl MetricReport {
    pub fn csv_row(&self, scene: &str) -> String {
        let mut out = String::new();
        write!(
            out,
            "{scene},{},{},{},{},{},{},{},{},{}",
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.counts.tn,
            self.precision,
            self.recall,
            self.f1,
            self.iou,
            self.overall_accuracy
        )
        .expect("write to string");
        out
    }
}
