//! Shared test oracles: naive direct-loop convolution and pooling, kernel
//! composition, and central finite differences. These deliberately mirror
//! the documented contracts (SAME padding, stride semantics, tie-breaks)
//! with independent scalar code paths, not the production loops.
//!
//! Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use evanet_core::kernels::{Layer, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// SAME padding arithmetic from the contract: out = ceil(in/stride),
/// low-side padding = floor(((out-1)*stride + k - in)_+ / 2).
pub fn same_pad(in_dim: usize, k: usize, stride: usize) -> (usize, isize) {
    let out = in_dim.div_ceil(stride);
    let needed = ((out - 1) * stride + k).saturating_sub(in_dim);
    (out, (needed / 2) as isize)
}

/// Direct 8-loop cross-correlation oracle for an L*H*W*Cin*Cout kernel.
pub fn naive_conv3d(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    stride: (usize, usize, usize),
) -> Tensor {
    let [t_in, y_in, x_in, cin]: [usize; 4] = input.shape().try_into().unwrap();
    let [kl, kh, kw, wcin, cout]: [usize; 5] = weight.shape().try_into().unwrap();
    assert_eq!(cin, wcin);
    let (t_out, pad_t) = same_pad(t_in, kl, stride.0);
    let (y_out, pad_y) = same_pad(y_in, kh, stride.1);
    let (x_out, pad_x) = same_pad(x_in, kw, stride.2);
    Tensor::from_fn(&[t_out, y_out, x_out, cout], |idx| {
        let (to, yo, xo, co) = (idx[0], idx[1], idx[2], idx[3]);
        let mut acc = bias[co];
        for dl in 0..kl {
            for dy in 0..kh {
                for dx in 0..kw {
                    let ti = (to * stride.0 + dl) as isize - pad_t;
                    let yi = (yo * stride.1 + dy) as isize - pad_y;
                    let xi = (xo * stride.2 + dx) as isize - pad_x;
                    if ti < 0
                        || ti >= t_in as isize
                        || yi < 0
                        || yi >= y_in as isize
                        || xi < 0
                        || xi >= x_in as isize
                    {
                        continue;
                    }
                    for ci in 0..cin {
                        acc += input.at(&[ti as usize, yi as usize, xi as usize, ci])
                            * weight.at(&[dl, dy, dx, ci, co]);
                    }
                }
            }
        }
        acc
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Max,
    Avg,
}

/// Windowed reduction oracle; max skips padded cells (equivalent to padding
/// with -inf), avg divides by the number of in-bounds cells.
pub fn naive_pool(
    input: &Tensor,
    kind: OracleKind,
    t_len: usize,
    s_len: usize,
    stride: (usize, usize, usize),
) -> Tensor {
    let [t_in, y_in, x_in, c]: [usize; 4] = input.shape().try_into().unwrap();
    let (t_out, pad_t) = same_pad(t_in, t_len, stride.0);
    let (y_out, pad_y) = same_pad(y_in, s_len, stride.1);
    let (x_out, pad_x) = same_pad(x_in, s_len, stride.2);
    Tensor::from_fn(&[t_out, y_out, x_out, c], |idx| {
        let (to, yo, xo, ci) = (idx[0], idx[1], idx[2], idx[3]);
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for dt in 0..t_len {
            for dy in 0..s_len {
                for dx in 0..s_len {
                    let ti = (to * stride.0 + dt) as isize - pad_t;
                    let yi = (yo * stride.1 + dy) as isize - pad_y;
                    let xi = (xo * stride.2 + dx) as isize - pad_x;
                    if ti < 0
                        || ti >= t_in as isize
                        || yi < 0
                        || yi >= y_in as isize
                        || xi < 0
                        || xi >= x_in as isize
                    {
                        continue;
                    }
                    let v = input.at(&[ti as usize, yi as usize, xi as usize, ci]);
                    max = max.max(v);
                    sum += v;
                    count += 1;
                }
            }
        }
        match kind {
            OracleKind::Max => max,
            OracleKind::Avg => sum / count.max(1) as f64,
        }
    })
}

/// Compose a (2+1)D layer's two stages into the equivalent full 3D kernel:
/// w[l,h,x,ci,co] = sum_m spatial[h,x,ci,m] * temporal[l,m,co].
pub fn compose_2plus1d_kernel(spatial: &Tensor, temporal: &Tensor) -> Tensor {
    let [h, w, cin, mid]: [usize; 4] = spatial.shape().try_into().unwrap();
    let [l, tmid, cout]: [usize; 3] = temporal.shape().try_into().unwrap();
    assert_eq!(mid, tmid);
    Tensor::from_fn(&[l, h, w, cin, cout], |idx| {
        let (dl, dy, dx, ci, co) = (idx[0], idx[1], idx[2], idx[3], idx[4]);
        (0..mid).map(|m| spatial.at(&[dy, dx, ci, m]) * temporal.at(&[dl, m, co])).sum()
    })
}

/// Compose an iTGM layer: w[l,h,x,ci,co] = spatial[h,x,ci,co] * k[co,l].
pub fn compose_itgm_kernel(spatial: &Tensor, mixture: &Tensor) -> Tensor {
    let [h, w, cin, cout]: [usize; 4] = spatial.shape().try_into().unwrap();
    let l = mixture.shape()[1];
    Tensor::from_fn(&[l, h, w, cin, cout], |idx| {
        let (dl, dy, dx, ci, co) = (idx[0], idx[1], idx[2], idx[3], idx[4]);
        spatial.at(&[dy, dx, ci, co]) * mixture.at(&[co, dl])
    })
}

/// Scalar objective used by gradient checks: L = <forward(input), cotangent>.
pub fn layer_objective(layer: &Layer, input: &Tensor, cotangent: &Tensor) -> f64 {
    let out = layer.forward(input).expect("forward in objective");
    out.data().iter().zip(cotangent.data()).map(|(a, b)| a * b).sum()
}

pub const FD_EPSILON: f64 = 1e-5;

/// Central finite differences of `layer_objective` with respect to every
/// layer parameter, in params_flat order.
pub fn fd_param_grads(layer: &Layer, input: &Tensor, cotangent: &Tensor) -> Vec<f64> {
    let base = layer.params_flat();
    let mut grads = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut plus = layer.clone();
        let mut minus = layer.clone();
        let mut p = base.clone();
        p[i] = base[i] + FD_EPSILON;
        plus.load_params_flat(&p).unwrap();
        p[i] = base[i] - FD_EPSILON;
        minus.load_params_flat(&p).unwrap();
        grads[i] = (layer_objective(&plus, input, cotangent)
            - layer_objective(&minus, input, cotangent))
            / (2.0 * FD_EPSILON);
    }
    grads
}

/// Central finite differences with respect to every input element.
pub fn fd_input_grads(layer: &Layer, input: &Tensor, cotangent: &Tensor) -> Vec<f64> {
    let mut grads = vec![0.0; input.len()];
    for i in 0..input.len() {
        let mut plus = input.clone();
        let mut minus = input.clone();
        plus.data_mut()[i] += FD_EPSILON;
        minus.data_mut()[i] -= FD_EPSILON;
        grads[i] = (layer_objective(layer, &plus, cotangent)
            - layer_objective(layer, &minus, cotangent))
            / (2.0 * FD_EPSILON);
    }
    grads
}

/// Hybrid relative error: |a - f| / max(1, |a|, |f|).
pub fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1.0))
        .fold(0.0, f64::max)
}
