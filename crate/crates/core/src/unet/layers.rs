//! Network building blocks with analytic forward and backward passes.
//!
//! Convolutions run as strip-wise im2col + GEMM so large activations never
//! materialize a full column matrix. All layer functions are deterministic
//! and pure; misuse (shape disagreement) panics, while the network-level
//! entry points in [`crate::unet`] validate and return errors.

use crate::tensor::Tensor;

use super::ConvKernel;

/// Upper bound on the im2col scratch buffer, in f64 elements.
const COL_BUDGET: usize = 1 << 22;

fn strip_rows(in_ch: usize, ksize: usize, width: usize) -> usize {
    (COL_BUDGET / (in_ch * ksize * ksize * width).max(1)).max(1)
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c(m x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    debug_assert!(m > 0 && k > 0 && n > 0);
    debug_assert!((m - 1) as isize * rsa + (k - 1) as isize * csa < a.len() as isize);
    debug_assert!((k - 1) as isize * rsb + (n - 1) as isize * csb < b.len() as isize);
    debug_assert!((m - 1) as isize * rsc + (n - 1) as isize * csc < c.len() as isize);
    // Tall-times-thin runs measurably faster than thin-times-wide here, so
    // compute C^T = B^T * A^T when the output is wider than it is tall.
    unsafe {
        if m < n {
            matrixmultiply::dgemm(
                n,
                k,
                m,
                alpha,
                b.as_ptr(),
                csb,
                rsb,
                a.as_ptr(),
                csa,
                rsa,
                beta,
                c.as_mut_ptr(),
                csc,
                rsc,
            );
        } else {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            );
        }
    }
}

/// Fills `col` with the `[in_ch*k*k x (y1-y0)*w]` column matrix for output
/// rows `y0..y1` of a stride-1, zero-padded convolution.
fn im2col_strip(x: &Tensor, ksize: usize, pad: usize, y0: usize, y1: usize, col: &mut [f64]) {
    let (h, w) = (x.height, x.width);
    let n = (y1 - y0) * w;
    let kk = ksize * ksize;
    debug_assert_eq!(col.len(), x.channels * kk * n);
    for ci in 0..x.channels {
        for ky in 0..ksize {
            for kx in 0..ksize {
                let row_base = (ci * kk + ky * ksize + kx) * n;
                let shift = kx as isize - pad as isize;
                for oy in y0..y1 {
                    let sy = oy as isize + ky as isize - pad as isize;
                    let dst = &mut col[row_base + (oy - y0) * w..row_base + (oy - y0 + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = x.row(ci, sy as usize);
                    if shift == 0 {
                        dst.copy_from_slice(src);
                    } else if shift < 0 {
                        let s = (-shift) as usize;
                        dst[..s].fill(0.0);
                        dst[s..].copy_from_slice(&src[..w - s]);
                    } else {
                        let s = shift as usize;
                        dst[w - s..].fill(0.0);
                        dst[..w - s].copy_from_slice(&src[s..]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column-matrix gradient back into the input gradient.
fn col2im_add_strip(dcol: &[f64], dx: &mut Tensor, ksize: usize, pad: usize, y0: usize, y1: usize) {
    let (h, w) = (dx.height, dx.width);
    let n = (y1 - y0) * w;
    let kk = ksize * ksize;
    for ci in 0..dx.channels {
        for ky in 0..ksize {
            for kx in 0..ksize {
                let row_base = (ci * kk + ky * ksize + kx) * n;
                let shift = kx as isize - pad as isize;
                for oy in y0..y1 {
                    let sy = oy as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &dcol[row_base + (oy - y0) * w..row_base + (oy - y0 + 1) * w];
                    let dst = dx.row_mut(ci, sy as usize);
                    if shift == 0 {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += *s;
                        }
                    } else if shift < 0 {
                        let s = (-shift) as usize;
                        for (d, v) in dst[..w - s].iter_mut().zip(&src[s..]) {
                            *d += *v;
                        }
                    } else {
                        let s = shift as usize;
                        for (d, v) in dst[s..].iter_mut().zip(&src[..w - s]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 convolution with zero padding `ksize/2`; output dims equal input dims.
pub fn conv_forward(kernel: &ConvKernel, x: &Tensor) -> Tensor {
    assert_eq!(x.channels, kernel.in_ch, "conv input channels");
    let (h, w) = (x.height, x.width);
    let pad = kernel.ksize / 2;
    let ckk = kernel.in_ch * kernel.ksize * kernel.ksize;
    let mut y = Tensor::zeros(kernel.out_ch, h, w);
    let plane = h * w;
    let rows = strip_rows(kernel.in_ch, kernel.ksize, w);
    let mut col = vec![0.0; ckk * rows * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let n = (y1 - y0) * w;
        im2col_strip(x, kernel.ksize, pad, y0, y1, &mut col[..ckk * n]);
        gemm(
            kernel.out_ch,
            ckk,
            n,
            1.0,
            &kernel.weights,
            ckk as isize,
            1,
            &col[..ckk * n],
            n as isize,
            1,
            0.0,
            &mut y.data[y0 * w..],
            plane as isize,
            1,
        );
        y0 = y1;
    }
    for co in 0..kernel.out_ch {
        let b = kernel.bias[co];
        for v in &mut y.data[co * plane..(co + 1) * plane] {
            *v += b;
        }
    }
    y
}

/// Gradient of a scalar loss through [`conv_forward`].
///
/// Returns the kernel gradient (same shape as the kernel) and the input
/// gradient. `x` must be the tensor the forward pass consumed.
pub fn conv_backward(kernel: &ConvKernel, x: &Tensor, dy: &Tensor) -> (ConvKernel, Tensor) {
    assert_eq!(x.channels, kernel.in_ch, "conv input channels");
    assert_eq!(dy.channels, kernel.out_ch, "conv output channels");
    assert!(dy.height == x.height && dy.width == x.width, "conv spatial dims");
    let (h, w) = (x.height, x.width);
    let pad = kernel.ksize / 2;
    let ckk = kernel.in_ch * kernel.ksize * kernel.ksize;
    let plane = h * w;
    let mut grad = ConvKernel::zeros_like(kernel);
    let mut dx = Tensor::zeros(kernel.in_ch, h, w);
    for co in 0..kernel.out_ch {
        grad.bias[co] = dy.channel(co).iter().sum();
    }
    let rows = strip_rows(kernel.in_ch, kernel.ksize, w);
    let mut col = vec![0.0; ckk * rows * w];
    let mut dcol = vec![0.0; ckk * rows * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let n = (y1 - y0) * w;
        im2col_strip(x, kernel.ksize, pad, y0, y1, &mut col[..ckk * n]);
        // dW += dY_strip * col^T
        gemm(
            kernel.out_ch,
            n,
            ckk,
            1.0,
            &dy.data[y0 * w..],
            plane as isize,
            1,
            &col[..ckk * n],
            1,
            n as isize,
            1.0,
            &mut grad.weights,
            ckk as isize,
            1,
        );
        // dcol = W^T * dY_strip
        gemm(
            ckk,
            kernel.out_ch,
            n,
            1.0,
            &kernel.weights,
            1,
            ckk as isize,
            &dy.data[y0 * w..],
            plane as isize,
            1,
            0.0,
            &mut dcol[..ckk * n],
            n as isize,
            1,
        );
        col2im_add_strip(&dcol[..ckk * n], &mut dx, kernel.ksize, pad, y0, y1);
        y0 = y1;
    }
    (grad, dx)
}

/// [`conv_backward`] without the input gradient, for layers whose input is
/// not differentiated (the network's first convolution).
pub fn conv_backward_params(kernel: &ConvKernel, x: &Tensor, dy: &Tensor) -> ConvKernel {
    assert_eq!(x.channels, kernel.in_ch, "conv input channels");
    assert_eq!(dy.channels, kernel.out_ch, "conv output channels");
    assert!(dy.height == x.height && dy.width == x.width, "conv spatial dims");
    let (h, w) = (x.height, x.width);
    let pad = kernel.ksize / 2;
    let ckk = kernel.in_ch * kernel.ksize * kernel.ksize;
    let plane = h * w;
    let mut grad = ConvKernel::zeros_like(kernel);
    for co in 0..kernel.out_ch {
        grad.bias[co] = dy.channel(co).iter().sum();
    }
    let rows = strip_rows(kernel.in_ch, kernel.ksize, w);
    let mut col = vec![0.0; ckk * rows * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let n = (y1 - y0) * w;
        im2col_strip(x, kernel.ksize, pad, y0, y1, &mut col[..ckk * n]);
        gemm(
            kernel.out_ch,
            n,
            ckk,
            1.0,
            &dy.data[y0 * w..],
            plane as isize,
            1,
            &col[..ckk * n],
            1,
            n as isize,
            1.0,
            &mut grad.weights,
            ckk as isize,
            1,
        );
        y0 = y1;
    }
    grad
}

pub fn relu_inplace(t: &mut Tensor) {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` by the ReLU activity recorded in the post-activation output.
pub fn relu_backward(post: &Tensor, grad: &mut Tensor) {
    assert!(post.same_shape(grad), "relu shapes");
    for (g, p) in grad.data.iter_mut().zip(&post.data) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max pool, stride 2. Ties resolve to the first element in row-major
/// window order. Returns pooled values and flat argmax indices into the input.
pub fn maxpool2_forward(x: &Tensor) -> (Tensor, Vec<u32>) {
    assert!(x.height % 2 == 0 && x.width % 2 == 0, "pool input dims must be even");
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, oh, ow);
    let mut idx = vec![0u32; x.channels * oh * ow];
    let mut o = 0;
    for c in 0..x.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for wy in 0..2 {
                    for wx in 0..2 {
                        let i = (c * x.height + 2 * oy + wy) * x.width + 2 * ox + wx;
                        if x.data[i] > best {
                            best = x.data[i];
                            best_i = i;
                        }
                    }
                }
                out.data[o] = best;
                idx[o] = best_i as u32;
                o += 1;
            }
        }
    }
    (out, idx)
}

/// Routes pooled gradients back to the argmax positions.
pub fn maxpool2_backward(idx: &[u32], dy: &Tensor, in_shape: (usize, usize, usize)) -> Tensor {
    assert_eq!(idx.len(), dy.len(), "pool index count");
    let mut dx = Tensor::zeros(in_shape.0, in_shape.1, in_shape.2);
    for (i, g) in idx.iter().zip(&dy.data) {
        dx.data[*i as usize] += *g;
    }
    dx
}

/// Nearest-neighbor 2x upsample.
pub fn upsample2_forward(x: &Tensor) -> Tensor {
    let (oh, ow) = (x.height * 2, x.width * 2);
    let mut out = Tensor::zeros(x.channels, oh, ow);
    for c in 0..x.channels {
        for oy in 0..oh {
            let src = x.row(c, oy / 2);
            let dst = out.row_mut(c, oy);
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / 2];
            }
        }
    }
    out
}

/// Sums each 2x2 output block back onto its source pixel.
pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    assert!(dy.height % 2 == 0 && dy.width % 2 == 0, "upsample grad dims");
    let (ih, iw) = (dy.height / 2, dy.width / 2);
    let mut dx = Tensor::zeros(dy.channels, ih, iw);
    for c in 0..dy.channels {
        for oy in 0..dy.height {
            let src = dy.row(c, oy);
            let dst = dx.row_mut(c, oy / 2);
            for (ox, s) in src.iter().enumerate() {
                dst[ox / 2] += *s;
            }
        }
    }
    dx
}

/// Channel concatenation: `a`'s channels first, then `b`'s.
pub fn concat_forward(a: &Tensor, b: &Tensor) -> Tensor {
    assert!(a.height == b.height && a.width == b.width, "concat spatial dims");
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_data(a.channels + b.channels, a.height, a.width, data)
}

/// Splits a concatenated gradient back into the two input gradients.
pub fn concat_backward(dy: &Tensor, a_channels: usize) -> (Tensor, Tensor) {
    assert!(a_channels < dy.channels, "concat split point");
    let plane = dy.height * dy.width;
    let split = a_channels * plane;
    let da = Tensor::from_data(a_channels, dy.height, dy.width, dy.data[..split].to_vec());
    let db =
        Tensor::from_data(dy.channels - a_channels, dy.height, dy.width, dy.data[split..].to_vec());
    (da, db)
}

/// Logits are clamped to +-36 so f64 sigmoid output stays strictly inside (0,1).
const SIGMOID_LOGIT_CLAMP: f64 = 36.0;

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in &mut out.data {
        let z = v.clamp(-SIGMOID_LOGIT_CLAMP, SIGMOID_LOGIT_CLAMP);
        *v = 1.0 / (1.0 + (-z).exp());
    }
    out
}

/// `dx = dy * y * (1 - y)` with `y` the sigmoid output.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    assert!(y.same_shape(dy), "sigmoid shapes");
    let mut dx = dy.clone();
    for (d, v) in dx.data.iter_mut().zip(&y.data) {
        *d *= v * (1.0 - v);
    }
    dx
}


#[cfg(test)]
mod params_only_tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn conv_backward_params_matches_full_backward() {
        let mut rng = seed::rng(108);
        for _ in 0..10 {
            let x = Tensor::from_data(3, 8, 8, (0..192).map(|_| rng.random_range(-1.0..1.0)).collect());
            let dy = Tensor::from_data(2, 8, 8, (0..128).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mut k = ConvKernel::zeros(2, 3, 3);
            for w in k.weights.iter_mut().chain(k.bias.iter_mut()) {
                *w = rng.random_range(-0.5..0.5);
            }
            let (full, _) = conv_backward(&k, &x, &dy);
            let fast = conv_backward_params(&k, &x, &dy);
            assert_eq!(full.weights, fast.weights);
            assert_eq!(full.bias, fast.bias);
        }
    }
}
