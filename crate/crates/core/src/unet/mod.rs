//! Small encoder-decoder segmentation network with skip connections.
//!
//! Architecture, fixed by configuration: `depth` encoder levels of two 3x3
//! convolutions (stride 1, zero padding 1, each followed by ReLU) and a 2x2
//! max pool; a two-convolution bottleneck; `depth` decoder levels of 2x
//! nearest-neighbor upsampling, a 3x3 convolution, channel concatenation
//! with the matching encoder output, and two more 3x3 convolutions; a final
//! 1x1 convolution to one logit channel followed by a sigmoid. Forward and
//! backward passes are analytic, double precision, and bit-reproducible.

pub mod layers;

mod graph;

pub use graph::{backward, forward, forward_infer, predict_mask, ForwardCache};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Decoder upsampling strategy. Nearest-neighbor followed by a convolution
/// is the only implemented mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpsampleMode {
    #[default]
    NearestThenConv,
}

/// Structural hyperparameters. Input spatial dims must be divisible by
/// `2^depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub upsample: UpsampleMode,
}

impl NetConfig {
    /// First-pass network: RGB in.
    pub fn pass1() -> Self {
        NetConfig { in_channels: 3, base_channels: 16, depth: 4, upsample: UpsampleMode::default() }
    }

    /// Second-pass network: binary mask in.
    pub fn pass2() -> Self {
        NetConfig { in_channels: 1, ..Self::pass1() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Argument("network depth must be >= 1".into()));
        }
        if self.base_channels < 1 {
            return Err(Error::Argument("base channel count must be >= 1".into()));
        }
        if self.in_channels < 1 {
            return Err(Error::Argument("input channel count must be >= 1".into()));
        }
        Ok(())
    }

    /// Required divisor of input spatial dimensions.
    pub fn spatial_divisor(&self) -> usize {
        1 << self.depth
    }
}

/// One convolution layer's learnable values.
///
/// `weights` is `[out_ch][in_ch][ky][kx]` row-major; `bias` is `[out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_ch: usize,
    pub in_ch: usize,
    pub ksize: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(out_ch: usize, in_ch: usize, ksize: usize) -> Self {
        ConvKernel {
            out_ch,
            in_ch,
            ksize,
            weights: vec![0.0; out_ch * in_ch * ksize * ksize],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn zeros_like(other: &ConvKernel) -> Self {
        Self::zeros(other.out_ch, other.in_ch, other.ksize)
    }

    pub fn value_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Shape of one layer in the fixed enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
}

/// Layer enumeration order: encoder levels (two convs each, shallow to
/// deep), bottleneck (two convs), decoder levels deep to shallow (upsample
/// conv, then two convs on the concatenated input), final 1x1 conv.
pub fn layer_shapes(cfg: &NetConfig) -> Vec<LayerShape> {
    let base = cfg.base_channels;
    let mut shapes = Vec::with_capacity(5 * cfg.depth + 3);
    for l in 0..cfg.depth {
        let in_ch = if l == 0 { cfg.in_channels } else { base << (l - 1) };
        let out_ch = base << l;
        shapes.push(LayerShape { in_ch, out_ch, ksize: 3 });
        shapes.push(LayerShape { in_ch: out_ch, out_ch, ksize: 3 });
    }
    let bott = base << cfg.depth;
    shapes.push(LayerShape { in_ch: bott / 2, out_ch: bott, ksize: 3 });
    shapes.push(LayerShape { in_ch: bott, out_ch: bott, ksize: 3 });
    for l in (0..cfg.depth).rev() {
        let here = base << l;
        shapes.push(LayerShape { in_ch: here * 2, out_ch: here, ksize: 3 });
        shapes.push(LayerShape { in_ch: here * 2, out_ch: here, ksize: 3 });
        shapes.push(LayerShape { in_ch: here, out_ch: here, ksize: 3 });
    }
    shapes.push(LayerShape { in_ch: base, out_ch: 1, ksize: 1 });
    shapes
}

/// All learnable weights and biases, in the fixed enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub layers: Vec<ConvKernel>,
}

impl NetParams {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let layers =
            layer_shapes(cfg).iter().map(|s| ConvKernel::zeros(s.out_ch, s.in_ch, s.ksize)).collect();
        NetParams { layers }
    }

    pub fn matches(&self, cfg: &NetConfig) -> bool {
        let shapes = layer_shapes(cfg);
        self.layers.len() == shapes.len()
            && self
                .layers
                .iter()
                .zip(&shapes)
                .all(|(k, s)| k.in_ch == s.in_ch && k.out_ch == s.out_ch && k.ksize == s.ksize)
    }

    pub fn value_count(&self) -> usize {
        self.layers.iter().map(ConvKernel::value_count).sum()
    }

    /// Flat view of every value, weights before bias within each layer.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|k| k.weights.iter().chain(k.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|k| k.weights.iter_mut().chain(k.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &NetParams) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += *b;
        }
    }
}

/// Deterministic initialization: kernels uniform in `[-b, b)` with
/// `b = sqrt(6 / fan_in)`, biases zero.
pub fn init_params(cfg: &NetConfig, seed_value: u64) -> Result<NetParams> {
    cfg.validate()?;
    let mut rng = seed::rng(seed_value);
    let layers = layer_shapes(cfg)
        .iter()
        .map(|s| {
            let mut k = ConvKernel::zeros(s.out_ch, s.in_ch, s.ksize);
            let fan_in = (s.in_ch * s.ksize * s.ksize) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for w in &mut k.weights {
                *w = rng.random_range(-bound..bound);
            }
            k
        })
        .collect();
    Ok(NetParams { layers })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MSEGNET1";

/// Writes the versioned checkpoint: magic, config fields as little-endian
/// u32, value count as u64, then every value as little-endian f64 in
/// enumeration order.
pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &NetConfig, params: &NetParams) -> Result<()> {
    let path = path.as_ref();
    if !params.matches(cfg) {
        return Err(Error::Checkpoint("parameters do not match config".into()));
    }
    let mut out = Vec::with_capacity(8 + 4 * 4 + 8 + params.value_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for field in [cfg.in_channels, cfg.base_channels, cfg.depth, 0usize] {
        out.write_all(&(field as u32).to_le_bytes()).expect("write to vec");
    }
    out.write_all(&(params.value_count() as u64).to_le_bytes()).expect("write to vec");
    for v in params.values() {
        out.write_all(&v.to_le_bytes()).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint and validates the payload against the stored config.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetConfig, NetParams)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |reason: &str| Error::Checkpoint(format!("{}: {reason}", path.display()));
    if bytes.len() < 8 + 16 + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic or truncated header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let in_channels = u32_at(8);
    let base_channels = u32_at(12);
    let depth = u32_at(16);
    let upsample_tag = u32_at(20);
    if upsample_tag != 0 {
        return Err(fail("unknown upsample mode tag"));
    }
    let cfg = NetConfig { in_channels, base_channels, depth, upsample: UpsampleMode::NearestThenConv };
    cfg.validate().map_err(|e| fail(&e.to_string()))?;
    let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let mut params = NetParams::zeros(&cfg);
    if count != params.value_count() {
        return Err(fail(&format!(
            "value count {count} disagrees with config-derived {}",
            params.value_count()
        )));
    }
    if bytes.len() != 32 + count * 8 {
        return Err(fail("payload length disagrees with value count"));
    }
    for (i, v) in params.values_mut().enumerate() {
        let off = 32 + i * 8;
        *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    }
    if !params.all_finite() {
        return Err(fail("non-finite parameter value"));
    }
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_for_depth4_base16() {
        let shapes = layer_shapes(&NetConfig::pass1());
        assert_eq!(shapes.len(), 23);
        assert_eq!(shapes[0], LayerShape { in_ch: 3, out_ch: 16, ksize: 3 });
        assert_eq!(shapes[8], LayerShape { in_ch: 128, out_ch: 256, ksize: 3 });
        // first decoder block: upsample conv halves 256 -> 128, then concat
        assert_eq!(shapes[10], LayerShape { in_ch: 256, out_ch: 128, ksize: 3 });
        assert_eq!(shapes[11], LayerShape { in_ch: 256, out_ch: 128, ksize: 3 });
        assert_eq!(shapes[22], LayerShape { in_ch: 16, out_ch: 1, ksize: 1 });
    }

    #[test]
    fn init_is_deterministic_per_seed_with_zero_biases() {
        let cfg = NetConfig { base_channels: 2, depth: 2, ..NetConfig::pass1() };
        let a = init_params(&cfg, 9).unwrap();
        let b = init_params(&cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = init_params(&cfg, 10).unwrap();
        assert!(a.values().zip(c.values()).any(|(x, y)| x != y));
        for k in &a.layers {
            assert!(k.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let cfg = NetConfig { base_channels: 4, depth: 1, ..NetConfig::pass1() };
        let p = init_params(&cfg, 3).unwrap();
        for (k, s) in p.layers.iter().zip(layer_shapes(&cfg)) {
            let bound = (6.0 / (s.in_ch * s.ksize * s.ksize) as f64).sqrt();
            assert!(k.weights.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = NetConfig { base_channels: 3, depth: 2, ..NetConfig::pass2() };
        let params = init_params(&cfg, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(params2, params);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let cfg = NetConfig { base_channels: 2, depth: 1, ..NetConfig::pass1() };
        let params = init_params(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &cfg, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
