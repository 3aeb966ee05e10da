//! Forward and backward passes over the whole network.
//!
//! Layer outputs are cached in enumeration order during the forward pass;
//! the backward pass walks them in reverse, rematerializing the cheap
//! structural tensors (upsampled maps, channel concatenations) instead of
//! storing them.

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::tensor::Tensor;

use super::layers;
use super::{NetConfig, NetParams};

/// Intermediates retained by [`forward`] for one backward pass.
pub struct ForwardCache {
    input: Tensor,
    /// Post-activation output of every conv layer (raw logits for the final one).
    conv_out: Vec<Tensor>,
    pool_out: Vec<Tensor>,
    pool_idx: Vec<Vec<u32>>,
    y: Tensor,
}

fn check_input(cfg: &NetConfig, params: &NetParams, x: &Tensor) -> Result<()> {
    cfg.validate()?;
    if !params.matches(cfg) {
        return Err(Error::Shape("parameters do not match network config".into()));
    }
    if x.channels != cfg.in_channels {
        return Err(Error::Shape(format!(
            "input has {} channels, config expects {}",
            x.channels, cfg.in_channels
        )));
    }
    let div = cfg.spatial_divisor();
    if x.height % div != 0 || x.width % div != 0 || x.height == 0 || x.width == 0 {
        return Err(Error::Shape(format!(
            "input dims {}x{} not divisible by 2^depth = {div}",
            x.width, x.height
        )));
    }
    Ok(())
}

/// Runs the network, returning the sigmoid output (1 channel, input spatial
/// dims) and the cache needed by [`backward`].
pub fn forward(params: &NetParams, cfg: &NetConfig, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
    check_input(cfg, params, x)?;
    let depth = cfg.depth;
    let mut conv_out: Vec<Tensor> = Vec::with_capacity(5 * depth + 3);
    let mut pool_out: Vec<Tensor> = Vec::with_capacity(depth);
    let mut pool_idx: Vec<Vec<u32>> = Vec::with_capacity(depth);

    for l in 0..depth {
        let inp = if l == 0 { x } else { &pool_out[l - 1] };
        let mut t = layers::conv_forward(&params.layers[2 * l], inp);
        layers::relu_inplace(&mut t);
        conv_out.push(t);
        let mut t = layers::conv_forward(&params.layers[2 * l + 1], &conv_out[2 * l]);
        layers::relu_inplace(&mut t);
        conv_out.push(t);
        let (p, idx) = layers::maxpool2_forward(&conv_out[2 * l + 1]);
        pool_out.push(p);
        pool_idx.push(idx);
    }

    let mut t = layers::conv_forward(&params.layers[2 * depth], &pool_out[depth - 1]);
    layers::relu_inplace(&mut t);
    conv_out.push(t);
    let mut t = layers::conv_forward(&params.layers[2 * depth + 1], &conv_out[2 * depth]);
    layers::relu_inplace(&mut t);
    conv_out.push(t);

    let mut below = 2 * depth + 1;
    for l in (0..depth).rev() {
        let base = 2 * depth + 2 + 3 * (depth - 1 - l);
        let up = layers::upsample2_forward(&conv_out[below]);
        let mut t = layers::conv_forward(&params.layers[base], &up);
        layers::relu_inplace(&mut t);
        conv_out.push(t);
        let cat = layers::concat_forward(&conv_out[2 * l + 1], &conv_out[base]);
        let mut t = layers::conv_forward(&params.layers[base + 1], &cat);
        layers::relu_inplace(&mut t);
        conv_out.push(t);
        let mut t = layers::conv_forward(&params.layers[base + 2], &conv_out[base + 1]);
        layers::relu_inplace(&mut t);
        conv_out.push(t);
        below = base + 2;
    }

    let final_i = 5 * depth + 2;
    let logits = layers::conv_forward(&params.layers[final_i], &conv_out[below]);
    conv_out.push(logits);
    let y = layers::sigmoid_forward(&conv_out[final_i]);

    let cache = ForwardCache { input: x.clone(), conv_out, pool_out, pool_idx, y: y.clone() };
    Ok((y, cache))
}

/// Forward pass without retaining intermediates.
pub fn forward_infer(params: &NetParams, cfg: &NetConfig, x: &Tensor) -> Result<Tensor> {
    forward(params, cfg, x).map(|(y, _)| y)
}

/// Gradient of the scalar loss w.r.t. every parameter, given the loss
/// gradient w.r.t. the network output. Enumeration order matches
/// [`NetParams`].
pub fn backward(
    params: &NetParams,
    cfg: &NetConfig,
    cache: &ForwardCache,
    d_loss_d_y: &Tensor,
) -> Result<NetParams> {
    cfg.validate()?;
    if !params.matches(cfg) {
        return Err(Error::Shape("parameters do not match network config".into()));
    }
    let depth = cfg.depth;
    if cache.conv_out.len() != 5 * depth + 3
        || cache.pool_out.len() != depth
        || cache.input.channels != cfg.in_channels
    {
        return Err(Error::Contract("cache does not come from a matching forward pass".into()));
    }
    if !cache.y.same_shape(d_loss_d_y) {
        return Err(Error::Contract(format!(
            "loss gradient shape {}x{}x{} does not match cached output {}x{}x{}",
            d_loss_d_y.channels,
            d_loss_d_y.height,
            d_loss_d_y.width,
            cache.y.channels,
            cache.y.height,
            cache.y.width
        )));
    }

    let mut grads = NetParams::zeros(cfg);
    let final_i = 5 * depth + 2;

    let dlogits = layers::sigmoid_backward(&cache.y, d_loss_d_y);
    let (gk, mut dcur) =
        layers::conv_backward(&params.layers[final_i], &cache.conv_out[final_i - 1], &dlogits);
    grads.layers[final_i] = gk;

    // Skip-connection gradients, deferred to the encoder walk.
    let mut dskip: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();

    for l in 0..depth {
        let base = 2 * depth + 2 + 3 * (depth - 1 - l);
        layers::relu_backward(&cache.conv_out[base + 2], &mut dcur);
        let (gk, mut dd1) =
            layers::conv_backward(&params.layers[base + 2], &cache.conv_out[base + 1], &dcur);
        grads.layers[base + 2] = gk;

        layers::relu_backward(&cache.conv_out[base + 1], &mut dd1);
        let cat = layers::concat_forward(&cache.conv_out[2 * l + 1], &cache.conv_out[base]);
        let (gk, dcat) = layers::conv_backward(&params.layers[base + 1], &cat, &dd1);
        grads.layers[base + 1] = gk;

        let skip_ch = cache.conv_out[2 * l + 1].channels;
        let (ds, mut duc) = layers::concat_backward(&dcat, skip_ch);
        dskip[l] = Some(ds);

        layers::relu_backward(&cache.conv_out[base], &mut duc);
        let below_i =
            if l == depth - 1 { 2 * depth + 1 } else { 2 * depth + 2 + 3 * (depth - 2 - l) + 2 };
        let up = layers::upsample2_forward(&cache.conv_out[below_i]);
        let (gk, du) = layers::conv_backward(&params.layers[base], &up, &duc);
        grads.layers[base] = gk;
        dcur = layers::upsample2_backward(&du);
    }

    layers::relu_backward(&cache.conv_out[2 * depth + 1], &mut dcur);
    let (gk, mut d) =
        layers::conv_backward(&params.layers[2 * depth + 1], &cache.conv_out[2 * depth], &dcur);
    grads.layers[2 * depth + 1] = gk;
    layers::relu_backward(&cache.conv_out[2 * depth], &mut d);
    let (gk, d) = layers::conv_backward(&params.layers[2 * depth], &cache.pool_out[depth - 1], &d);
    grads.layers[2 * depth] = gk;
    dcur = d;

    for l in (0..depth).rev() {
        let c2 = &cache.conv_out[2 * l + 1];
        let mut dc2 =
            layers::maxpool2_backward(&cache.pool_idx[l], &dcur, (c2.channels, c2.height, c2.width));
        if let Some(ds) = &dskip[l] {
            for (a, b) in dc2.data.iter_mut().zip(&ds.data) {
                *a += *b;
            }
        }
        layers::relu_backward(c2, &mut dc2);
        let (gk, mut dc1) = layers::conv_backward(&params.layers[2 * l + 1], &cache.conv_out[2 * l], &dc2);
        grads.layers[2 * l + 1] = gk;
        layers::relu_backward(&cache.conv_out[2 * l], &mut dc1);
        if l == 0 {
            // Nothing consumes the gradient w.r.t. the network input.
            grads.layers[0] = layers::conv_backward_params(&params.layers[0], &cache.input, &dc1);
        } else {
            let (gk, dinp) = layers::conv_backward(&params.layers[2 * l], &cache.pool_out[l - 1], &dc1);
            grads.layers[2 * l] = gk;
            dcur = dinp;
        }
    }

    Ok(grads)
}

/// Thresholds the network output into a mask: 1 where output is strictly
/// greater than `threshold`.
pub fn predict_mask(
    params: &NetParams,
    cfg: &NetConfig,
    x: &Tensor,
    threshold: f64,
) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!("threshold {threshold} outside [0, 1]")));
    }
    let y = forward_infer(params, cfg, x)?;
    let data = y.data.iter().map(|v| u8::from(*v > threshold)).collect();
    BinaryMask::new(x.width, x.height, data, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{bce_loss, BceTerms};
    use crate::seed;
    use crate::unet::init_params;
    use rand::Rng;

    fn small_cfg() -> NetConfig {
        NetConfig { in_channels: 1, base_channels: 2, depth: 2, ..NetConfig::pass1() }
    }

    fn rand_input(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_data(c, h, w, (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    #[test]
    fn rgb_256_in_gives_single_channel_256_out() {
        let cfg = NetConfig::pass1();
        let params = init_params(&cfg, 0).unwrap();
        let mut rng = seed::rng(1);
        let x = rand_input(&mut rng, 3, 256, 256);
        let y = forward_infer(&params, &cfg, &x).unwrap();
        assert_eq!((y.channels, y.height, y.width), (1, 256, 256));
        assert!(y.data.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn pass2_config_keeps_spatial_dims() {
        let cfg = NetConfig::pass2();
        let params = init_params(&cfg, 0).unwrap();
        let mut rng = seed::rng(2);
        let x = rand_input(&mut rng, 1, 64, 64);
        let y = forward_infer(&params, &cfg, &x).unwrap();
        assert_eq!((y.channels, y.height, y.width), (1, 64, 64));
    }

    #[test]
    fn zero_params_give_half_everywhere() {
        let cfg = small_cfg();
        let params = NetParams::zeros(&cfg);
        let mut rng = seed::rng(3);
        let x = rand_input(&mut rng, 1, 16, 16);
        let y = forward_infer(&params, &cfg, &x).unwrap();
        assert!(y.data.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let cfg = small_cfg();
        let params = init_params(&cfg, 0).unwrap();
        let x = Tensor::zeros(3, 16, 16);
        assert!(matches!(forward_infer(&params, &cfg, &x), Err(Error::Shape(_))));
        let x = Tensor::zeros(1, 18, 16);
        assert!(matches!(forward_infer(&params, &cfg, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let cfg = small_cfg();
        let params = init_params(&cfg, 0).unwrap();
        let mut rng = seed::rng(4);
        let x = rand_input(&mut rng, 1, 16, 16);
        let (_, cache) = forward(&params, &cfg, &x).unwrap();
        let bad_dy = Tensor::zeros(1, 8, 8);
        assert!(matches!(backward(&params, &cfg, &cache, &bad_dy), Err(Error::Contract(_))));
        let other_cfg = NetConfig { depth: 1, ..small_cfg() };
        let other_params = init_params(&other_cfg, 0).unwrap();
        let dy = Tensor::zeros(1, 16, 16);
        assert!(matches!(
            backward(&other_params, &other_cfg, &cache, &dy),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradient() {
        let cfg = small_cfg();
        let params = init_params(&cfg, 5).unwrap();
        let mut rng = seed::rng(5);
        let x = rand_input(&mut rng, 1, 16, 16);
        let (y, cache) = forward(&params, &cfg, &x).unwrap();
        let dy = Tensor::zeros(1, y.height, y.width);
        let grads = backward(&params, &cfg, &cache, &dy).unwrap();
        assert!(grads.values().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_and_backward_are_bit_reproducible() {
        let cfg = small_cfg();
        let params = init_params(&cfg, 6).unwrap();
        let mut rng = seed::rng(6);
        let x = rand_input(&mut rng, 1, 16, 16);
        let dy = Tensor::from_data(1, 16, 16, (0..256).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (y1, c1) = forward(&params, &cfg, &x).unwrap();
        let (y2, c2) = forward(&params, &cfg, &x).unwrap();
        assert_eq!(y1.data, y2.data);
        let g1 = backward(&params, &cfg, &c1, &dy).unwrap();
        let g2 = backward(&params, &cfg, &c2, &dy).unwrap();
        assert!(g1.values().zip(g2.values()).all(|(a, b)| a == b));
    }

    /// Whole-network gradient check against central finite differences of
    /// the BCE loss, covering the composition of every layer type.
    #[test]
    fn full_network_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let params = init_params(&cfg, 7).unwrap();
        let mut rng = seed::rng(7);
        let x = rand_input(&mut rng, 1, 8, 8);
        let targets: Vec<f64> = (0..64).map(|_| f64::from(rng.random_range(0..2u8))).collect();

        let loss_of = |p: &NetParams| -> f64 {
            let y = forward_infer(p, &cfg, &x).unwrap();
            bce_loss(&BceTerms::new(&targets, &y.data).unwrap()).unwrap().loss
        };

        let (y, cache) = forward(&params, &cfg, &x).unwrap();
        let bce = bce_loss(&BceTerms::new(&targets, &y.data).unwrap()).unwrap();
        let dy = Tensor::from_data(1, 8, 8, bce.d_loss_d_p);
        let grads = backward(&params, &cfg, &cache, &dy).unwrap();

        let h = 1e-5;
        let mut checked = 0usize;
        let mut max_rel = 0.0f64;
        let flat_grads: Vec<f64> = grads.values().copied().collect();
        for i in 0..params.value_count() {
            let mut pp = params.clone();
            let mut pm = params.clone();
            *pp.values_mut().nth(i).unwrap() += h;
            *pm.values_mut().nth(i).unwrap() -= h;
            let numeric = (loss_of(&pp) - loss_of(&pm)) / (2.0 * h);
            let analytic = flat_grads[i];
            let denom = analytic.abs().max(numeric.abs());
            if denom > 1e-10 {
                max_rel = max_rel.max((analytic - numeric).abs() / denom);
            }
            checked += 1;
        }
        assert!(checked > 2000, "expected full parameter coverage, got {checked}");
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn predict_mask_threshold_rules() {
        let cfg = small_cfg();
        let mut rng = seed::rng(8);
        let x = rand_input(&mut rng, 1, 16, 16);

        // Zero params: output 0.5 everywhere; strict > keeps the mask empty.
        let zero = NetParams::zeros(&cfg);
        let m = predict_mask(&zero, &cfg, &x, 0.5).unwrap();
        assert!(m.data.iter().all(|v| *v == 0));
        // Any sigmoid output is > 0, so threshold 0 fills the mask.
        let m = predict_mask(&zero, &cfg, &x, 0.0).unwrap();
        assert!(m.data.iter().all(|v| *v == 1));

        // Bias of +10 on the final layer pushes every logit to +10.
        let mut biased = NetParams::zeros(&cfg);
        let last = biased.layers.len() - 1;
        biased.layers[last].bias[0] = 10.0;
        let m = predict_mask(&biased, &cfg, &x, 0.5).unwrap();
        assert!(m.data.iter().all(|v| *v == 1));

        assert!(matches!(predict_mask(&zero, &cfg, &x, 1.5), Err(Error::Argument(_))));
    }
}
