//! Dual-pass training and inference orchestration.
//!
//! Pass 1 trains RGB -> mask. Its binarized predictions over the same
//! seeded split become the 1-channel inputs of pass 2, which trains
//! mask -> mask to suppress ink-shaped false positives. Full-tile
//! inference runs patch-wise: split, pass-1 predict, merge, re-split the
//! intermediate mask, pass-2 predict, merge, preserving georeferencing
//! throughout. All randomness derives from the run seed; re-running any
//! step with identical inputs yields bit-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{load_sample, mask_to_tensor, raster_to_tensor, Sample, SamplePair, SplitSpec};
use crate::error::{Error, Result};
use crate::geotile::{merge_patches, split_with_overlap, PadMode, Patch, PatchGrid, PixelGrid};
use crate::metrics::{metrics, ConfusionCounts};
use crate::optim::{adam_step, bce_loss, select_best_epoch, AdamState, BceTerms, EpochCurve};
use crate::raster::{BinaryMask, Raster};
use crate::seed;
use crate::tensor::Tensor;
use crate::unet::{backward, forward, init_params, load_checkpoint, predict_mask, save_checkpoint, NetConfig, NetParams};

const INIT_STREAM: u64 = 0x494e4954;

/// Patch edge used for tiled inference.
pub const INFER_PATCH: usize = 256;

pub const PASS1_DEFAULT_EPOCHS: usize = 20;
pub const PASS2_DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 8;

/// Full determinism handle for one training pass.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: PASS1_DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: crate::optim::DEFAULT_LEARNING_RATE,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Argument("epoch budget must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Argument(format!("learning rate {} invalid", self.learning_rate)));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Everything one trained pass leaves behind.
#[derive(Debug, Clone)]
pub struct PassArtifacts {
    pub params: NetParams,
    pub cfg: NetConfig,
    pub curve: EpochCurve,
    pub best_epoch: usize,
    pub checkpoint_path: PathBuf,
}

/// The trained dual-pass model.
#[derive(Debug, Clone)]
pub struct PipelineModel {
    pub pass1: PassArtifacts,
    pub pass2: PassArtifacts,
}

fn check_samples(samples: &[Sample], cfg: &NetConfig, role: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("no {role} samples")));
    }
    let div = cfg.spatial_divisor();
    for (i, s) in samples.iter().enumerate() {
        if s.image.channels != cfg.in_channels {
            return Err(Error::Shape(format!(
                "{role} sample {i} has {} channels, config expects {}",
                s.image.channels, cfg.in_channels
            )));
        }
        if s.image.height % div != 0 || s.image.width % div != 0 {
            return Err(Error::Shape(format!(
                "{role} sample {i} dims {}x{} not divisible by {div}",
                s.image.width, s.image.height
            )));
        }
        if s.mask.width != s.image.width || s.mask.height != s.image.height {
            return Err(Error::Shape(format!("{role} sample {i} mask dims differ from image")));
        }
    }
    Ok(())
}

/// Forward every sample of one batch, compute the pooled pixel-wise BCE,
/// and return (loss, summed parameter gradients).
fn batch_step(params: &NetParams, cfg: &NetConfig, samples: &[Sample], batch: &[usize]) -> Result<(f64, NetParams)> {
    let outs: Vec<_> = batch
        .par_iter()
        .map(|si| forward(params, cfg, &samples[*si].image))
        .collect::<Result<Vec<_>>>()?;
    let mut targets = Vec::new();
    let mut probs = Vec::new();
    for (si, (y, _)) in batch.iter().zip(&outs) {
        targets.extend(samples[*si].mask.data.iter().map(|v| f64::from(*v)));
        probs.extend_from_slice(&y.data);
    }
    let bce = bce_loss(&BceTerms::new(&targets, &probs)?)?;

    let mut offset = 0usize;
    let mut slices = Vec::with_capacity(batch.len());
    for (y, _) in &outs {
        slices.push(&bce.d_loss_d_p[offset..offset + y.len()]);
        offset += y.len();
    }
    let grads: Vec<NetParams> = outs
        .par_iter()
        .zip(slices.par_iter())
        .map(|((y, cache), dslice)| {
            let dy = Tensor::from_data(1, y.height, y.width, dslice.to_vec());
            backward(params, cfg, cache, &dy)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = NetParams::zeros(cfg);
    for g in &grads {
        total.add_assign(g);
    }
    Ok((bce.loss, total))
}

/// Pooled validation loss and confusion-derived F1 / overall accuracy.
fn validate_pass(params: &NetParams, cfg: &NetConfig, val: &[Sample]) -> Result<(f64, f64, f64)> {
    let ys: Vec<Tensor> = val
        .par_iter()
        .map(|s| forward(params, cfg, &s.image).map(|(y, _)| y))
        .collect::<Result<Vec<_>>>()?;
    let mut targets = Vec::new();
    let mut probs = Vec::new();
    let mut counts = ConfusionCounts::default();
    for (s, y) in val.iter().zip(&ys) {
        targets.extend(s.mask.data.iter().map(|v| f64::from(*v)));
        probs.extend_from_slice(&y.data);
        for (p, t) in y.data.iter().zip(&s.mask.data) {
            match (*p > 0.5, *t == 1) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }
    let loss = bce_loss(&BceTerms::new(&targets, &probs)?)?.loss;
    let report = metrics(&counts)?;
    Ok((loss, report.f1, report.overall_accuracy))
}

fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.ckpt"))
}

/// Trains one pass for the configured epoch budget, checkpointing every
/// epoch; returns the best-epoch parameters (by validation F1).
pub fn train_pass(
    train: &[Sample],
    val: &[Sample],
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PassArtifacts> {
    train_pass_until(train, val, cfg, tcfg, out_dir, |_| false)
}

/// [`train_pass`] with an early-stop predicate evaluated on the curve after
/// each completed epoch; `tcfg.epochs` stays the hard budget.
pub fn train_pass_until(
    train: &[Sample],
    val: &[Sample],
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
    stop: impl Fn(&EpochCurve) -> bool,
) -> Result<PassArtifacts> {
    cfg.validate()?;
    tcfg.validate()?;
    check_samples(train, cfg, "training")?;
    check_samples(val, cfg, "validation")?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut params = init_params(cfg, seed::derive(tcfg.seed, INIT_STREAM + cfg.in_channels as u64))?;
    let mut adam = AdamState::for_params(&params, tcfg.learning_rate);
    let mut curve = EpochCurve::new();

    for epoch in 1..=tcfg.epochs {
        let batches = crate::data::make_batches(train.len(), tcfg.batch_size, tcfg.seed, epoch)?;
        let mut loss_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let context = |e: Error| {
                Error::Numeric(format!("epoch {epoch} batch {}: {e}", bi + 1))
            };
            let (loss, grads) = batch_step(&params, cfg, train, batch).map_err(context)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch} batch {}: non-finite loss {loss}",
                    bi + 1
                )));
            }
            adam_step(&mut params, &grads, &mut adam).map_err(context)?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / batches.len() as f64;
        let (val_loss, val_f1, val_oa) = validate_pass(&params, cfg, val)?;
        curve.push(train_loss, val_loss, val_f1, val_oa);
        save_checkpoint(epoch_checkpoint(out_dir, epoch), cfg, &params)?;
        if stop(&curve) {
            break;
        }
    }

    let best_epoch = select_best_epoch(&curve)?;
    let best_path = out_dir.join("best.ckpt");
    fs::copy(epoch_checkpoint(out_dir, best_epoch), &best_path)
        .map_err(|e| Error::io(&best_path, e))?;
    curve.write_csv(out_dir.join("curves.csv"))?;
    let (loaded_cfg, best_params) = load_checkpoint(&best_path)?;
    debug_assert_eq!(&loaded_cfg, cfg);
    Ok(PassArtifacts {
        params: best_params,
        cfg: *cfg,
        curve,
        best_epoch,
        checkpoint_path: best_path,
    })
}

/// Replaces each sample's input with the pass-1 predicted mask, lifted to a
/// 1-channel {0,1} tensor; targets pass through untouched.
pub fn build_pass2_dataset(pass1: &PassArtifacts, samples: &[Sample]) -> Result<Vec<Sample>> {
    samples
        .par_iter()
        .map(|s| {
            let pred = predict_mask(&pass1.params, &pass1.cfg, &s.image, 0.5)?;
            Ok(Sample { image: mask_to_tensor(&pred), mask: s.mask.clone() })
        })
        .collect()
}

/// Splits the pair set once, trains pass 1 on RGB, rebuilds the dataset
/// from pass-1 predictions, and trains pass 2 on it. Artifacts land under
/// `out_dir/pass1` and `out_dir/pass2`.
pub fn train_pipeline(
    pairs: &[SamplePair],
    target_size: usize,
    tcfg1: &TrainConfig,
    tcfg2: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PipelineModel> {
    let out_dir = out_dir.as_ref();
    let split_spec = SplitSpec { train_fraction: tcfg1.train_fraction, seed: tcfg1.seed };
    let (train_pairs, val_pairs) = crate::data::split_dataset(pairs, &split_spec)?;
    let train: Vec<Sample> =
        train_pairs.par_iter().map(|p| load_sample(p, target_size)).collect::<Result<_>>()?;
    let val: Vec<Sample> =
        val_pairs.par_iter().map(|p| load_sample(p, target_size)).collect::<Result<_>>()?;

    let pass1 = train_pass(&train, &val, &NetConfig::pass1(), tcfg1, out_dir.join("pass1"))?;
    let train2 = build_pass2_dataset(&pass1, &train)?;
    let val2 = build_pass2_dataset(&pass1, &val)?;
    let pass2 = train_pass(&train2, &val2, &NetConfig::pass2(), tcfg2, out_dir.join("pass2"))?;
    Ok(PipelineModel { pass1, pass2 })
}

fn load_pass(dir: &Path, expect_in_channels: usize) -> Result<PassArtifacts> {
    let checkpoint_path = dir.join("best.ckpt");
    let (cfg, params) = load_checkpoint(&checkpoint_path)?;
    if cfg.in_channels != expect_in_channels {
        return Err(Error::Checkpoint(format!(
            "{}: expected {expect_in_channels} input channels, found {}",
            checkpoint_path.display(),
            cfg.in_channels
        )));
    }
    let curve = EpochCurve::read_csv(dir.join("curves.csv"))?;
    let best_epoch = select_best_epoch(&curve)?;
    Ok(PassArtifacts { params, cfg, curve, best_epoch, checkpoint_path })
}

impl PipelineModel {
    /// Loads `pass1/best.ckpt` and `pass2/best.ckpt` (plus curves) from a
    /// training output directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(PipelineModel {
            pass1: load_pass(&dir.join("pass1"), 3)?,
            pass2: load_pass(&dir.join("pass2"), 1)?,
        })
    }
}

/// Tiled inference options.
#[derive(Debug, Clone, Copy, Default)]
pub struct InferOptions {
    /// Overlap margin per patch edge; only patch centers are kept at merge.
    pub overlap: usize,
}

/// Patch-wise prediction of one pass over a whole image.
fn predict_patches<T, F>(
    params: &NetParams,
    cfg: &NetConfig,
    img: &T,
    opts: &InferOptions,
    to_tensor: F,
) -> Result<BinaryMask>
where
    T: PixelGrid + Sync,
    F: Fn(&T) -> Tensor + Sync,
{
    let (grid, patches) = split_with_overlap(img, INFER_PATCH, opts.overlap, PadMode::Reflect)?;
    let mask_patches: Vec<Patch<BinaryMask>> = patches
        .par_iter()
        .map(|p| {
            let t = to_tensor(&p.pixels);
            predict_mask(params, cfg, &t, 0.5).map(|m| Patch {
                grid_col: p.grid_col,
                grid_row: p.grid_row,
                pixels: m,
            })
        })
        .collect::<Result<_>>()?;
    let mask_grid = PatchGrid { channels: 1, ..grid };
    merge_patches(&mask_grid, &mask_patches, img.geo().copied(), img.crs().map(str::to_string))
}

/// Dual-pass inference over one RGB tile: split into patches, pass-1
/// predict, merge, re-split the intermediate binary mask, pass-2 predict,
/// merge. Output carries the tile's geotransform and CRS.
pub fn infer_tile(model: &PipelineModel, tile: &Raster) -> Result<BinaryMask> {
    infer_tile_with(model, tile, &InferOptions::default())
}

pub fn infer_tile_with(model: &PipelineModel, tile: &Raster, opts: &InferOptions) -> Result<BinaryMask> {
    if tile.channels != 3 {
        return Err(Error::Argument("tile inference expects an RGB raster".into()));
    }
    let intermediate =
        predict_patches(&model.pass1.params, &model.pass1.cfg, tile, opts, raster_to_tensor)?;
    predict_patches(&model.pass2.params, &model.pass2.cfg, &intermediate, opts, mask_to_tensor)
}

/// Outcome of a corpus run: written per-tile masks, the mosaic, and any
/// tiles that failed (skipped, reported, never fatal on their own).
#[derive(Debug)]
pub struct CorpusInference {
    pub mask_paths: Vec<PathBuf>,
    pub mosaic_path: PathBuf,
    pub failures: Vec<(PathBuf, Error)>,
}

/// Runs [`infer_tile`] over every tile path, writing each mask and then the
/// mosaic of all successes into `out_dir`.
pub fn infer_corpus(
    model: &PipelineModel,
    tile_paths: &[PathBuf],
    out_dir: impl AsRef<Path>,
    opts: &InferOptions,
) -> Result<CorpusInference> {
    if tile_paths.is_empty() {
        return Err(Error::Argument("corpus inference needs at least one tile".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut masks = Vec::new();
    let mut mask_paths = Vec::new();
    let mut failures = Vec::new();
    for path in tile_paths {
        let run = || -> Result<BinaryMask> {
            let tile = Raster::read(path)?;
            infer_tile_with(model, &tile, opts)
        };
        match run() {
            Ok(mask) => {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                let mask_path = out_dir.join(format!("{stem}.pgm"));
                mask.write(&mask_path)?;
                mask_paths.push(mask_path);
                masks.push(mask);
            }
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    if masks.is_empty() {
        return Err(Error::Argument(format!(
            "no tile produced a mask ({} failures)",
            failures.len()
        )));
    }
    let mosaic = crate::geotile::mosaic_tiles(&masks)?;
    let mosaic_path = out_dir.join("mosaic.pgm");
    mosaic.write(&mosaic_path)?;
    Ok(CorpusInference { mask_paths, mosaic_path, failures })
}

/// Writes a key=value run manifest atomically (temp file + rename).
pub fn write_run_manifest(path: impl AsRef<Path>, entries: &[(&str, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Geotransform;
    use crate::synthmap::{generate_scene, SceneSpec};

    fn tiny_cfg(in_channels: usize) -> NetConfig {
        NetConfig { in_channels, base_channels: 2, depth: 2, ..NetConfig::pass1() }
    }

    fn scene_samples(n: usize, size: usize, seed: u64) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let scene = generate_scene(&SceneSpec::easy(size, seed + i as u64)).unwrap();
                Sample { image: raster_to_tensor(&scene.image), mask: scene.truth }
            })
            .collect()
    }

    fn tiny_tcfg(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 2, seed: 5, ..TrainConfig::default() }
    }

    #[test]
    fn train_pass_records_curve_and_checkpoints_deterministically() {
        let train = scene_samples(4, 32, 0);
        let val = scene_samples(2, 32, 100);
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(3);
        let a = train_pass(&train, &val, &cfg, &tiny_tcfg(2), dir.path().join("a")).unwrap();
        assert_eq!(a.curve.records.len(), 2);
        assert!(a.checkpoint_path.exists());
        assert!(dir.path().join("a/epoch_001.ckpt").exists());
        assert!(dir.path().join("a/epoch_002.ckpt").exists());
        assert!(dir.path().join("a/curves.csv").exists());
        assert!(a.best_epoch >= 1 && a.best_epoch <= 2);
        let b = train_pass(&train, &val, &cfg, &tiny_tcfg(2), dir.path().join("b")).unwrap();
        assert_eq!(a.curve, b.curve);
        assert!(a.params.values().zip(b.params.values()).all(|(x, y)| x == y));
    }

    #[test]
    fn returned_params_are_best_epoch_checkpoint() {
        let train = scene_samples(4, 32, 7);
        let val = scene_samples(2, 32, 200);
        let dir = tempfile::tempdir().unwrap();
        let art = train_pass(&train, &val, &tiny_cfg(3), &tiny_tcfg(3), dir.path()).unwrap();
        let (_, best) = load_checkpoint(epoch_checkpoint(dir.path(), art.best_epoch)).unwrap();
        assert!(art.params.values().zip(best.values()).all(|(a, b)| a == b));
    }

    #[test]
    fn early_stop_predicate_caps_epochs() {
        let train = scene_samples(4, 32, 3);
        let val = scene_samples(2, 32, 300);
        let dir = tempfile::tempdir().unwrap();
        let art = train_pass_until(&train, &val, &tiny_cfg(3), &tiny_tcfg(5), dir.path(), |c| {
            c.records.len() >= 2
        })
        .unwrap();
        assert_eq!(art.curve.records.len(), 2);
        assert!(!epoch_checkpoint(dir.path(), 3).exists());
    }

    #[test]
    fn non_finite_input_aborts_with_epoch_and_batch() {
        let mut train = scene_samples(2, 32, 4);
        train[0].image.data[0] = f64::NAN;
        let val = scene_samples(2, 32, 400);
        let dir = tempfile::tempdir().unwrap();
        let err = train_pass(&train, &val, &tiny_cfg(3), &tiny_tcfg(1), dir.path()).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("epoch 1"), "missing context: {msg}"),
            other => panic!("expected numeric error, got {other}"),
        }
    }

    #[test]
    fn pass2_dataset_is_one_channel_with_untouched_targets() {
        let samples = scene_samples(3, 32, 9);
        let dir = tempfile::tempdir().unwrap();
        let art = train_pass(
            &samples[..2],
            &samples[2..],
            &tiny_cfg(3),
            &tiny_tcfg(1),
            dir.path(),
        )
        .unwrap();
        let rebuilt = build_pass2_dataset(&art, &samples).unwrap();
        assert_eq!(rebuilt.len(), samples.len());
        for (orig, s) in samples.iter().zip(&rebuilt) {
            assert_eq!(s.image.channels, 1);
            assert!(s.image.data.iter().all(|v| *v == 0.0 || *v == 1.0));
            assert_eq!(s.mask, orig.mask);
        }
    }

    fn untrained_model() -> PipelineModel {
        let dir = tempfile::tempdir().unwrap();
        let mk = |cfg: NetConfig, sub: &str| {
            let params = init_params(&cfg, 11).unwrap();
            let path = dir.path().join(sub);
            fs::create_dir_all(&path).unwrap();
            let ckpt = path.join("best.ckpt");
            save_checkpoint(&ckpt, &cfg, &params).unwrap();
            let mut curve = EpochCurve::new();
            curve.push(1.0, 1.0, 0.5, 0.5);
            PassArtifacts { params, cfg, curve, best_epoch: 1, checkpoint_path: ckpt }
        };
        PipelineModel { pass1: mk(tiny_cfg(3), "pass1"), pass2: mk(tiny_cfg(1), "pass2") }
    }

    #[test]
    fn infer_tile_preserves_dims_geo_and_binary_range() {
        let model = untrained_model();
        let mut scene = generate_scene(&SceneSpec::easy(80, 13)).unwrap();
        scene.image.geo = Some(Geotransform::north_up(1000.0, 2000.0, 5.0, -5.0));
        scene.image.crs = Some("EPSG:2154".into());
        let mask = infer_tile(&model, &scene.image).unwrap();
        assert_eq!((mask.width, mask.height), (80, 80));
        assert_eq!(mask.geo, scene.image.geo);
        assert_eq!(mask.crs, scene.image.crs);
        assert!(mask.data.iter().all(|v| *v <= 1));
    }

    #[test]
    fn infer_tile_rejects_grayscale() {
        let model = untrained_model();
        let gray = Raster::new(64, 64, 1, vec![0; 64 * 64], None, None).unwrap();
        assert!(matches!(infer_tile(&model, &gray), Err(Error::Argument(_))));
    }

    #[test]
    fn corpus_inference_writes_masks_and_order_independent_mosaic() {
        let model = untrained_model();
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for i in 0..2 {
            let mut scene = generate_scene(&SceneSpec::easy(64, 50 + i)).unwrap();
            scene.image.geo =
                Some(Geotransform::north_up(1000.0 + (i as f64) * 64.0 * 5.0, 2000.0, 5.0, -5.0));
            scene.image.crs = Some("EPSG:2154".into());
            let p = dir.path().join(format!("tile_{i}.ppm"));
            scene.image.write(&p).unwrap();
            paths.push(p);
        }
        let out_a = dir.path().join("out_a");
        let a = infer_corpus(&model, &paths, &out_a, &InferOptions::default()).unwrap();
        assert_eq!(a.mask_paths.len(), 2);
        assert!(a.failures.is_empty());
        let mosaic_a = std::fs::read(&a.mosaic_path).unwrap();

        paths.reverse();
        let out_b = dir.path().join("out_b");
        let b = infer_corpus(&model, &paths, &out_b, &InferOptions::default()).unwrap();
        assert_eq!(std::fs::read(&b.mosaic_path).unwrap(), mosaic_a);

        assert!(infer_corpus(&model, &[], dir.path(), &InferOptions::default()).is_err());
    }

    #[test]
    fn corpus_inference_skips_and_reports_bad_tiles() {
        let model = untrained_model();
        let dir = tempfile::tempdir().unwrap();
        let mut scene = generate_scene(&SceneSpec::easy(64, 77)).unwrap();
        scene.image.geo = Some(Geotransform::north_up(0.0, 0.0, 5.0, -5.0));
        let good = dir.path().join("good.ppm");
        scene.image.write(&good).unwrap();
        let bad = dir.path().join("missing.ppm");
        let out = infer_corpus(
            &model,
            &[good, bad.clone()],
            dir.path().join("out"),
            &InferOptions::default(),
        )
        .unwrap();
        assert_eq!(out.mask_paths.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, bad);
    }

    #[test]
    fn manifest_is_written_atomically_with_key_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        write_run_manifest(&path, &[("command", "train".into()), ("seed", "7".into())]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "command=train\nseed=7\n");
        assert!(!path.with_extension("tmp").exists());
    }
}
