//! Binary cross-entropy loss, the Adam optimizer, and per-epoch curve
//! tracking with best-epoch selection.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::unet::NetParams;

/// One batch of pixel-wise BCE terms: targets in {0,1} and predicted
/// probabilities in [0,1], element-aligned. Probabilities are clamped into
/// `[clamp_eps, 1-clamp_eps]` before any logarithm.
#[derive(Debug, Clone)]
pub struct BceTerms<'a> {
    pub targets: &'a [f64],
    pub probs: &'a [f64],
    pub clamp_eps: f64,
}

pub const DEFAULT_CLAMP_EPS: f64 = 1e-7;

impl<'a> BceTerms<'a> {
    pub fn new(targets: &'a [f64], probs: &'a [f64]) -> Result<Self> {
        Self::with_clamp(targets, probs, DEFAULT_CLAMP_EPS)
    }

    pub fn with_clamp(targets: &'a [f64], probs: &'a [f64], clamp_eps: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Argument("BCE batch is empty".into()));
        }
        if targets.len() != probs.len() {
            return Err(Error::Argument(format!(
                "BCE target count {} != probability count {}",
                targets.len(),
                probs.len()
            )));
        }
        if targets.iter().any(|y| *y != 0.0 && *y != 1.0) {
            return Err(Error::Argument("BCE targets must be exactly 0 or 1".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Argument("BCE probabilities must lie in [0, 1]".into()));
        }
        if !(0.0..0.5).contains(&clamp_eps) || clamp_eps == 0.0 {
            return Err(Error::Argument(format!("clamp_eps {clamp_eps} outside (0, 0.5)")));
        }
        Ok(BceTerms { targets, probs, clamp_eps })
    }

    /// Number of elements (pixels) in the batch.
    pub fn count(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone)]
pub struct BceLoss {
    /// Mean negative log-likelihood, always >= 0.
    pub loss: f64,
    /// Per-element gradient of the loss w.r.t. each probability.
    pub d_loss_d_p: Vec<f64>,
}

/// Nonnegative binary cross entropy:
/// `loss = -(1/M) * sum(y*ln(p) + (1-y)*ln(1-p))` over clamped `p`, with
/// `dLoss/dp = -(1/M) * (y/p - (1-y)/(1-p))` per element.
pub fn bce_loss(t: &BceTerms) -> Result<BceLoss> {
    let m = t.count() as f64;
    let lo = t.clamp_eps;
    let hi = 1.0 - t.clamp_eps;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(t.count());
    for (y, p) in t.targets.iter().zip(t.probs) {
        let p = p.clamp(lo, hi);
        sum += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push(-(y / p - (1.0 - y) / (1.0 - p)) / m);
    }
    Ok(BceLoss { loss: -sum / m, d_loss_d_p: grad })
}

/// Adam optimizer state. Moment accumulators share the parameter shape.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: NetParams,
    pub v: NetParams,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

impl AdamState {
    /// Fresh state with zero moments, shaped after `params`.
    pub fn for_params(params: &NetParams, lr: f64) -> Self {
        let zero = NetParams {
            layers: params.layers.iter().map(crate::unet::ConvKernel::zeros_like).collect(),
        };
        AdamState { step: 0, m: zero.clone(), v: zero, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam update with bias-corrected moments:
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(params: &mut NetParams, grads: &NetParams, state: &mut AdamState) -> Result<()> {
    if params.value_count() != grads.value_count()
        || params.value_count() != state.m.value_count()
    {
        return Err(Error::Shape("adam shapes disagree".into()));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient in adam step".into()));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * *g;
        *v = b2 * *v + (1.0 - b2) * *g * *g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Per-epoch training record, epochs indexed from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub val_oa: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochCurve {
    pub records: Vec<EpochRecord>,
}

pub const CURVE_CSV_HEADER: &str = "epoch,train_loss,val_loss,val_f1,val_oa";

impl EpochCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, train_loss: f64, val_loss: f64, val_f1: f64, val_oa: f64) {
        let epoch = self.records.len() + 1;
        self.records.push(EpochRecord { epoch, train_loss, val_loss, val_f1, val_oa });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1, r.val_oa)
                .expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CURVE_CSV_HEADER => {}
            _ => return Err(Error::Argument("curve CSV missing expected header".into())),
        }
        let mut curve = EpochCurve::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Argument(format!("curve CSV row {} malformed", i + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Argument(format!("curve CSV row {}: bad number {s:?}", i + 2)))
            };
            let epoch = fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Argument(format!("curve CSV row {}: bad epoch", i + 2)))?;
            if epoch != curve.records.len() + 1 {
                return Err(Error::Argument(format!(
                    "curve CSV epochs not consecutive at row {}",
                    i + 2
                )));
            }
            curve.records.push(EpochRecord {
                epoch,
                train_loss: parse(fields[1])?,
                val_loss: parse(fields[2])?,
                val_f1: parse(fields[3])?,
                val_oa: parse(fields[4])?,
            });
        }
        Ok(curve)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Epoch (1-based) maximizing validation F1; ties break toward the earlier
/// epoch.
pub fn select_best_epoch(curve: &EpochCurve) -> Result<usize> {
    if curve.records.is_empty() {
        return Err(Error::Argument("cannot select best epoch of an empty curve".into()));
    }
    let mut best = &curve.records[0];
    for r in &curve.records[1..] {
        if r.val_f1 > best.val_f1 {
            best = r;
        }
    }
    Ok(best.epoch)
}
