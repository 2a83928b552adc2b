//! Layer kinds: 3D, (2+1)D, iTGM and 1x1x1 convolutions plus space-time
//! pooling, with direct-loop forward passes and exact analytic gradients.
//!
//! All convolutions are cross-correlations with SAME zero padding and
//! strides of 1 or 2. Output extents are `ceil(in/stride)` per dimension
//! with the padding excess split low/high (low side gets the floor).
//! Max pooling pads with -inf semantics, average pooling divides by the
//! true (unpadded) window count.

use rand::Rng;

use super::tensor::{feature_dims, Tensor};
use super::tgm::{
    build_gaussian_mixture_kernel, gaussian_mixture_kernel_backward, TGMParams, TgmGrads,
};
use super::KernelError;

/// Strides along (T, Y, X).
pub type Stride3 = (usize, usize, usize);

pub const STRIDE_ONE: Stride3 = (1, 1, 1);

fn same_out_pad(in_dim: usize, kernel: usize, stride: usize) -> (usize, usize) {
    debug_assert!(stride >= 1);
    let out = in_dim.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(in_dim);
    (out, needed / 2)
}

// ---------------------------------------------------------------------------
// Shared direct-loop cores
// ---------------------------------------------------------------------------

type ConvDims = (usize, usize, usize, usize, usize); // (L, H, W, Cin, Cout)

fn conv_out_shape(input: &Tensor, dims: ConvDims, stride: Stride3) -> Result<[usize; 4], KernelError> {
    let (t_in, y_in, x_in, c_in) = feature_dims(input)?;
    let (kl, kh, kw, cin, cout) = dims;
    if c_in != cin {
        return Err(KernelError::ShapeMismatch(format!(
            "input has {c_in} channels, kernel expects {cin} (kernel {kl}x{kh}x{kw}x{cin}x{cout})"
        )));
    }
    let (t_out, _) = same_out_pad(t_in, kl, stride.0);
    let (y_out, _) = same_out_pad(y_in, kh, stride.1);
    let (x_out, _) = same_out_pad(x_in, kw, stride.2);
    Ok([t_out, y_out, x_out, cout])
}

/// Direct cross-correlation of a T*Y*X*Cin map with an L*H*W*Cin*Cout
/// kernel. Spatial-only, temporal-only and pointwise convolutions all reduce
/// to this with unit extents on the unused axes.
fn conv3d_core(
    input: &Tensor,
    weight: &[f64],
    dims: ConvDims,
    bias: Option<&[f64]>,
    stride: Stride3,
) -> Result<Tensor, KernelError> {
    let out_shape = conv_out_shape(input, dims, stride)?;
    let (t_in, y_in, x_in, _) = feature_dims(input)?;
    let (kl, kh, kw, cin, cout) = dims;
    let (_, pad_t) = same_out_pad(t_in, kl, stride.0);
    let (_, pad_y) = same_out_pad(y_in, kh, stride.1);
    let (_, pad_x) = same_out_pad(x_in, kw, stride.2);

    let mut out = Tensor::zeros(&out_shape);
    let [t_out, y_out, x_out, _] = out_shape;
    let in_data = input.data();
    let out_data = out.data_mut();
    let mut acc = vec![0.0f64; cout];

    for to in 0..t_out {
        for yo in 0..y_out {
            for xo in 0..x_out {
                acc.fill(0.0);
                for dl in 0..kl {
                    let ti = (to * stride.0 + dl) as isize - pad_t as isize;
                    if ti < 0 || ti >= t_in as isize {
                        continue;
                    }
                    for dy in 0..kh {
                        let yi = (yo * stride.1 + dy) as isize - pad_y as isize;
                        if yi < 0 || yi >= y_in as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let xi = (xo * stride.2 + dx) as isize - pad_x as isize;
                            if xi < 0 || xi >= x_in as isize {
                                continue;
                            }
                            let in_base =
                                (((ti as usize * y_in) + yi as usize) * x_in + xi as usize) * cin;
                            let w_base = (((dl * kh) + dy) * kw + dx) * cin * cout;
                            for ci in 0..cin {
                                let v = in_data[in_base + ci];
                                let w_row = &weight[w_base + ci * cout..w_base + (ci + 1) * cout];
                                for (a, w) in acc.iter_mut().zip(w_row) {
                                    *a += v * w;
                                }
                            }
                        }
                    }
                }
                let out_base = (((to * y_out) + yo) * x_out + xo) * cout;
                match bias {
                    Some(b) => {
                        for o in 0..cout {
                            out_data[out_base + o] = acc[o] + b[o];
                        }
                    }
                    None => out_data[out_base..out_base + cout].copy_from_slice(&acc),
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `conv3d_core` with respect to input, weight and bias.
fn conv3d_core_backward(
    input: &Tensor,
    weight: &[f64],
    dims: ConvDims,
    stride: Stride3,
    grad_out: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>), KernelError> {
    let out_shape = conv_out_shape(input, dims, stride)?;
    if grad_out.shape() != out_shape {
        return Err(KernelError::ShapeMismatch(format!(
            "grad_out shape {:?} != forward output shape {:?}",
            grad_out.shape(),
            out_shape
        )));
    }
    let (t_in, y_in, x_in, _) = feature_dims(input)?;
    let (kl, kh, kw, cin, cout) = dims;
    let (_, pad_t) = same_out_pad(t_in, kl, stride.0);
    let (_, pad_y) = same_out_pad(y_in, kh, stride.1);
    let (_, pad_x) = same_out_pad(x_in, kw, stride.2);
    let [t_out, y_out, x_out, _] = out_shape;

    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = vec![0.0f64; weight.len()];
    let mut grad_b = vec![0.0f64; cout];
    let in_data = input.data();
    let g_data = grad_out.data();
    let gi = grad_in.data_mut();

    for to in 0..t_out {
        for yo in 0..y_out {
            for xo in 0..x_out {
                let out_base = (((to * y_out) + yo) * x_out + xo) * cout;
                let g_row = &g_data[out_base..out_base + cout];
                for (gb, g) in grad_b.iter_mut().zip(g_row) {
                    *gb += g;
                }
                for dl in 0..kl {
                    let ti = (to * stride.0 + dl) as isize - pad_t as isize;
                    if ti < 0 || ti >= t_in as isize {
                        continue;
                    }
                    for dy in 0..kh {
                        let yi = (yo * stride.1 + dy) as isize - pad_y as isize;
                        if yi < 0 || yi >= y_in as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let xi = (xo * stride.2 + dx) as isize - pad_x as isize;
                            if xi < 0 || xi >= x_in as isize {
                                continue;
                            }
                            let in_base =
                                (((ti as usize * y_in) + yi as usize) * x_in + xi as usize) * cin;
                            let w_base = (((dl * kh) + dy) * kw + dx) * cin * cout;
                            for ci in 0..cin {
                                let v = in_data[in_base + ci];
                                let w_row = &weight[w_base + ci * cout..w_base + (ci + 1) * cout];
                                let gw_row =
                                    &mut grad_w[w_base + ci * cout..w_base + (ci + 1) * cout];
                                let mut back = 0.0;
                                for o in 0..cout {
                                    back += w_row[o] * g_row[o];
                                    gw_row[o] += v * g_row[o];
                                }
                                gi[in_base + ci] += back;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Depthwise temporal convolution: output channel `c` convolves input
/// channel `c` with kernel row `c` of a C*L kernel.
fn temporal_depthwise(
    input: &Tensor,
    kernel: &Tensor,
    stride_t: usize,
    bias: Option<&[f64]>,
) -> Result<Tensor, KernelError> {
    let (t_in, y, x, c) = feature_dims(input)?;
    let (kc, kl) = match *kernel.shape() {
        [a, b] => (a, b),
        ref s => {
            return Err(KernelError::ShapeMismatch(format!(
                "temporal kernel must be Cout*L, got {s:?}"
            )))
        }
    };
    if kc != c {
        return Err(KernelError::ShapeMismatch(format!(
            "depthwise kernel has {kc} rows, input has {c} channels"
        )));
    }
    let (t_out, pad_t) = same_out_pad(t_in, kl, stride_t);
    // Transpose to [L][C] so the inner loop reads both operands contiguously.
    let mut k_col = vec![0.0f64; kl * c];
    for ci in 0..c {
        for dl in 0..kl {
            k_col[dl * c + ci] = kernel.data()[ci * kl + dl];
        }
    }
    let plane = y * x * c;
    let mut out = Tensor::zeros(&[t_out, y, x, c]);
    for to in 0..t_out {
        let out_plane = &mut out.data_mut()[to * plane..(to + 1) * plane];
        for dl in 0..kl {
            let ti = (to * stride_t + dl) as isize - pad_t as isize;
            if ti < 0 || ti >= t_in as isize {
                continue;
            }
            let in_plane = &input.data()[ti as usize * plane..(ti as usize + 1) * plane];
            let k_row = &k_col[dl * c..(dl + 1) * c];
            for p in 0..y * x {
                let base = p * c;
                for ci in 0..c {
                    out_plane[base + ci] += in_plane[base + ci] * k_row[ci];
                }
            }
        }
        if let Some(b) = bias {
            for p in 0..y * x {
                let base = p * c;
                for ci in 0..c {
                    out_plane[base + ci] += b[ci];
                }
            }
        }
    }
    Ok(out)
}

fn temporal_depthwise_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride_t: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Vec<f64>), KernelError> {
    let (t_in, y, x, c) = feature_dims(input)?;
    let kl = kernel.shape()[1];
    let (t_out, pad_t) = same_out_pad(t_in, kl, stride_t);
    if grad_out.shape() != [t_out, y, x, c] {
        return Err(KernelError::ShapeMismatch(format!(
            "grad_out shape {:?} != forward output shape {:?}",
            grad_out.shape(),
            [t_out, y, x, c]
        )));
    }
    let plane = y * x * c;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_k = Tensor::zeros(kernel.shape());
    let mut grad_b = vec![0.0f64; c];
    for to in 0..t_out {
        let g_plane = &grad_out.data()[to * plane..(to + 1) * plane];
        for p in 0..y * x {
            let base = p * c;
            for ci in 0..c {
                grad_b[ci] += g_plane[base + ci];
            }
        }
        for dl in 0..kl {
            let ti = (to * stride_t + dl) as isize - pad_t as isize;
            if ti < 0 || ti >= t_in as isize {
                continue;
            }
            let in_plane = &input.data()[ti as usize * plane..(ti as usize + 1) * plane];
            let gi_plane = &mut grad_in.data_mut()[ti as usize * plane..(ti as usize + 1) * plane];
            for p in 0..y * x {
                let base = p * c;
                for ci in 0..c {
                    let g = g_plane[base + ci];
                    gi_plane[base + ci] += kernel.data()[ci * kl + dl] * g;
                    grad_k.data_mut()[ci * kl + dl] += in_plane[base + ci] * g;
                }
            }
        }
    }
    Ok((grad_in, grad_k, grad_b))
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

fn pool_core(
    input: &Tensor,
    kind: PoolKind,
    t_len: usize,
    s_len: usize,
    stride: Stride3,
) -> Result<Tensor, KernelError> {
    if t_len == 0 || s_len == 0 {
        return Err(KernelError::InvalidParam("pooling window must be positive".into()));
    }
    let (t_in, y_in, x_in, c) = feature_dims(input)?;
    let (t_out, pad_t) = same_out_pad(t_in, t_len, stride.0);
    let (y_out, pad_y) = same_out_pad(y_in, s_len, stride.1);
    let (x_out, pad_x) = same_out_pad(x_in, s_len, stride.2);
    let mut out = Tensor::zeros(&[t_out, y_out, x_out, c]);
    let init = match kind {
        PoolKind::Max => f64::NEG_INFINITY,
        PoolKind::Avg => 0.0,
    };
    let mut acc = vec![0.0f64; c];
    for to in 0..t_out {
        for yo in 0..y_out {
            for xo in 0..x_out {
                acc.fill(init);
                let mut count = 0usize;
                for dt in 0..t_len {
                    let ti = (to * stride.0 + dt) as isize - pad_t as isize;
                    if ti < 0 || ti >= t_in as isize {
                        continue;
                    }
                    for dy in 0..s_len {
                        let yi = (yo * stride.1 + dy) as isize - pad_y as isize;
                        if yi < 0 || yi >= y_in as isize {
                            continue;
                        }
                        for dx in 0..s_len {
                            let xi = (xo * stride.2 + dx) as isize - pad_x as isize;
                            if xi < 0 || xi >= x_in as isize {
                                continue;
                            }
                            count += 1;
                            let base =
                                (((ti as usize * y_in) + yi as usize) * x_in + xi as usize) * c;
                            match kind {
                                PoolKind::Max => {
                                    for ci in 0..c {
                                        acc[ci] = acc[ci].max(input.data()[base + ci]);
                                    }
                                }
                                PoolKind::Avg => {
                                    for ci in 0..c {
                                        acc[ci] += input.data()[base + ci];
                                    }
                                }
                            }
                        }
                    }
                }
                let out_base = (((to * y_out) + yo) * x_out + xo) * c;
                match kind {
                    PoolKind::Max => out.data_mut()[out_base..out_base + c].copy_from_slice(&acc),
                    PoolKind::Avg => {
                        let n = count.max(1) as f64;
                        for ci in 0..c {
                            out.data_mut()[out_base + ci] = acc[ci] / n;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn pool_core_backward(
    input: &Tensor,
    kind: PoolKind,
    t_len: usize,
    s_len: usize,
    stride: Stride3,
    grad_out: &Tensor,
) -> Result<Tensor, KernelError> {
    let (t_in, y_in, x_in, c) = feature_dims(input)?;
    let (t_out, pad_t) = same_out_pad(t_in, t_len, stride.0);
    let (y_out, pad_y) = same_out_pad(y_in, s_len, stride.1);
    let (x_out, pad_x) = same_out_pad(x_in, s_len, stride.2);
    if grad_out.shape() != [t_out, y_out, x_out, c] {
        return Err(KernelError::ShapeMismatch(format!(
            "grad_out shape {:?} != forward output shape {:?}",
            grad_out.shape(),
            [t_out, y_out, x_out, c]
        )));
    }
    let mut grad_in = Tensor::zeros(input.shape());
    // Per-channel argmax with ties broken by the lowest flat input index;
    // the scan order below visits flat indices ascending.
    let mut best_val = vec![0.0f64; c];
    let mut best_idx = vec![0usize; c];
    for to in 0..t_out {
        for yo in 0..y_out {
            for xo in 0..x_out {
                let out_base = (((to * y_out) + yo) * x_out + xo) * c;
                let g_row = &grad_out.data()[out_base..out_base + c];
                best_val.fill(f64::NEG_INFINITY);
                best_idx.fill(usize::MAX);
                let mut count = 0usize;
                let mut valid: Vec<usize> = Vec::new();
                for dt in 0..t_len {
                    let ti = (to * stride.0 + dt) as isize - pad_t as isize;
                    if ti < 0 || ti >= t_in as isize {
                        continue;
                    }
                    for dy in 0..s_len {
                        let yi = (yo * stride.1 + dy) as isize - pad_y as isize;
                        if yi < 0 || yi >= y_in as isize {
                            continue;
                        }
                        for dx in 0..s_len {
                            let xi = (xo * stride.2 + dx) as isize - pad_x as isize;
                            if xi < 0 || xi >= x_in as isize {
                                continue;
                            }
                            let base =
                                (((ti as usize * y_in) + yi as usize) * x_in + xi as usize) * c;
                            count += 1;
                            match kind {
                                PoolKind::Max => {
                                    for ci in 0..c {
                                        let v = input.data()[base + ci];
                                        if v > best_val[ci] {
                                            best_val[ci] = v;
                                            best_idx[ci] = base + ci;
                                        }
                                    }
                                }
                                PoolKind::Avg => valid.push(base),
                            }
                        }
                    }
                }
                match kind {
                    PoolKind::Max => {
                        for ci in 0..c {
                            if best_idx[ci] != usize::MAX {
                                grad_in.data_mut()[best_idx[ci]] += g_row[ci];
                            }
                        }
                    }
                    PoolKind::Avg => {
                        let n = count.max(1) as f64;
                        for base in &valid {
                            for ci in 0..c {
                                grad_in.data_mut()[base + ci] += g_row[ci] / n;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

// ---------------------------------------------------------------------------
// Layer types
// ---------------------------------------------------------------------------

fn glorot_tensor(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..=limit))
}

/// Full 3D convolution, weight L*H*W*Cin*Cout plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub stride: Stride3,
}

impl Conv3d {
    pub fn init(
        temporal_len: usize,
        spatial: usize,
        cin: usize,
        cout: usize,
        stride: Stride3,
        rng: &mut impl Rng,
    ) -> Conv3d {
        let taps = temporal_len * spatial * spatial;
        Conv3d {
            weight: glorot_tensor(
                rng,
                &[temporal_len, spatial, spatial, cin, cout],
                taps * cin,
                taps * cout,
            ),
            bias: vec![0.0; cout],
            stride,
        }
    }

    fn dims(&self) -> ConvDims {
        let s = self.weight.shape();
        (s[0], s[1], s[2], s[3], s[4])
    }
}

/// Factorized convolution: 2D spatial kernel then a full temporal kernel
/// mixing channels (Cout -> Cout), composed linearly with one final bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2Plus1d {
    pub spatial: Tensor,
    pub temporal: Tensor,
    pub bias: Vec<f64>,
    pub stride: Stride3,
}

impl Conv2Plus1d {
    pub fn init(
        temporal_len: usize,
        spatial: usize,
        cin: usize,
        cout: usize,
        stride: Stride3,
        rng: &mut impl Rng,
    ) -> Conv2Plus1d {
        let s_taps = spatial * spatial;
        let spatial_w = glorot_tensor(rng, &[spatial, spatial, cin, cout], s_taps * cin, s_taps * cout);
        let temporal_w =
            glorot_tensor(rng, &[temporal_len, cout, cout], temporal_len * cout, temporal_len * cout);
        Conv2Plus1d { spatial: spatial_w, temporal: temporal_w, bias: vec![0.0; cout], stride }
    }

    fn spatial_dims(&self) -> ConvDims {
        let s = self.spatial.shape();
        (1, s[0], s[1], s[2], s[3])
    }

    fn temporal_dims(&self) -> ConvDims {
        let s = self.temporal.shape();
        (s[0], 1, 1, s[1], s[2])
    }
}

/// Inflated temporal Gaussian mixture layer: a 2D spatial kernel followed by
/// a depthwise temporal kernel whose rows are a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ItgmLayer {
    pub spatial: Tensor,
    pub tgm: TGMParams,
    pub bias: Vec<f64>,
    pub stride: Stride3,
}

impl ItgmLayer {
    pub fn init(
        temporal_len: usize,
        spatial: usize,
        cin: usize,
        cout: usize,
        mixtures: usize,
        stride: Stride3,
        rng: &mut impl Rng,
    ) -> ItgmLayer {
        let s_taps = spatial * spatial;
        ItgmLayer {
            spatial: glorot_tensor(rng, &[spatial, spatial, cin, cout], s_taps * cin, s_taps * cout),
            tgm: TGMParams::init(mixtures, cout, temporal_len),
            bias: vec![0.0; cout],
            stride,
        }
    }

    fn spatial_dims(&self) -> ConvDims {
        let s = self.spatial.shape();
        (1, s[0], s[1], s[2], s[3])
    }

    /// H*W*Cin*Cout + 2M + M*Cout, independent of the temporal length.
    pub fn weight_param_count(&self) -> usize {
        self.spatial.len() + self.tgm.param_count()
    }
}

/// Pointwise convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1x1 {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Conv1x1x1 {
    pub fn init(cin: usize, cout: usize, rng: &mut impl Rng) -> Conv1x1x1 {
        Conv1x1x1 { weight: glorot_tensor(rng, &[cin, cout], cin, cout), bias: vec![0.0; cout] }
    }

    fn dims(&self) -> ConvDims {
        let s = self.weight.shape();
        (1, 1, 1, s[0], s[1])
    }
}

/// Space-time pooling with a t_len x s_len x s_len window.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolLayer {
    pub kind: PoolKind,
    pub temporal_len: usize,
    pub spatial_len: usize,
    pub stride: Stride3,
}

// ---------------------------------------------------------------------------
// Forward entry points
// ---------------------------------------------------------------------------

pub fn conv3d_forward(input: &Tensor, layer: &Conv3d) -> Result<Tensor, KernelError> {
    conv3d_core(input, layer.weight.data(), layer.dims(), Some(&layer.bias), layer.stride)
}

pub fn conv2plus1d_forward(input: &Tensor, layer: &Conv2Plus1d) -> Result<Tensor, KernelError> {
    let spatial_out = conv3d_core(
        input,
        layer.spatial.data(),
        layer.spatial_dims(),
        None,
        (1, layer.stride.1, layer.stride.2),
    )?;
    conv3d_core(
        &spatial_out,
        layer.temporal.data(),
        layer.temporal_dims(),
        Some(&layer.bias),
        (layer.stride.0, 1, 1),
    )
}

/// Spatial 2D convolution applied frame-wise, then a depthwise temporal
/// pass with one mixture-kernel row per output channel.
pub fn itgm_forward(input: &Tensor, layer: &ItgmLayer) -> Result<Tensor, KernelError> {
    let spatial_out = conv3d_core(
        input,
        layer.spatial.data(),
        layer.spatial_dims(),
        None,
        (1, layer.stride.1, layer.stride.2),
    )?;
    let kernel = build_gaussian_mixture_kernel(&layer.tgm)?;
    temporal_depthwise(&spatial_out, &kernel, layer.stride.0, Some(&layer.bias))
}

pub fn conv1x1x1_forward(input: &Tensor, layer: &Conv1x1x1) -> Result<Tensor, KernelError> {
    conv3d_core(input, layer.weight.data(), layer.dims(), Some(&layer.bias), STRIDE_ONE)
}

pub fn pool_forward(input: &Tensor, layer: &PoolLayer) -> Result<Tensor, KernelError> {
    pool_core(input, layer.kind, layer.temporal_len, layer.spatial_len, layer.stride)
}

// ---------------------------------------------------------------------------
// Unified layer value
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv3d(Conv3d),
    Conv2Plus1d(Conv2Plus1d),
    Itgm(ItgmLayer),
    Conv1x1x1(Conv1x1x1),
    Pool(PoolLayer),
}

/// Saved intermediate of a composite layer's forward pass, reusable by the
/// backward pass to avoid recomputing the spatial stage.
#[derive(Debug, Clone)]
pub enum LayerAux {
    None,
    SpatialStage(Tensor),
}

/// Parameter gradients in the same flattened order as [`Layer::params_flat`].
#[derive(Debug, Clone)]
pub enum LayerGrads {
    Conv3d { weight: Vec<f64>, bias: Vec<f64> },
    Conv2Plus1d { spatial: Vec<f64>, temporal: Vec<f64>, bias: Vec<f64> },
    Itgm { spatial: Vec<f64>, tgm: TgmGrads, bias: Vec<f64> },
    Conv1x1x1 { weight: Vec<f64>, bias: Vec<f64> },
    Pool,
}

impl LayerGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            LayerGrads::Conv3d { weight, bias } | LayerGrads::Conv1x1x1 { weight, bias } => {
                let mut v = weight.clone();
                v.extend_from_slice(bias);
                v
            }
            LayerGrads::Conv2Plus1d { spatial, temporal, bias } => {
                let mut v = spatial.clone();
                v.extend_from_slice(temporal);
                v.extend_from_slice(bias);
                v
            }
            LayerGrads::Itgm { spatial, tgm, bias } => {
                let mut v = spatial.clone();
                v.extend_from_slice(&tgm.mu_hat);
                v.extend_from_slice(&tgm.sigma_hat);
                v.extend_from_slice(tgm.a.data());
                v.extend_from_slice(bias);
                v
            }
            LayerGrads::Pool => Vec::new(),
        }
    }
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv3d(_) => "conv3d",
            Layer::Conv2Plus1d(_) => "conv21d",
            Layer::Itgm(_) => "itgm",
            Layer::Conv1x1x1(_) => "conv1x1",
            Layer::Pool(p) => match p.kind {
                PoolKind::Max => "maxpool",
                PoolKind::Avg => "avgpool",
            },
        }
    }

    pub fn out_channels(&self, in_channels: usize) -> usize {
        match self {
            Layer::Conv3d(l) => l.weight.shape()[4],
            Layer::Conv2Plus1d(l) => l.temporal.shape()[2],
            Layer::Itgm(l) => l.spatial.shape()[3],
            Layer::Conv1x1x1(l) => l.weight.shape()[1],
            Layer::Pool(_) => in_channels,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, KernelError> {
        Ok(self.forward_aux(input)?.0)
    }

    pub fn forward_aux(&self, input: &Tensor) -> Result<(Tensor, LayerAux), KernelError> {
        match self {
            Layer::Conv3d(l) => Ok((conv3d_forward(input, l)?, LayerAux::None)),
            Layer::Conv2Plus1d(l) => {
                let s = conv3d_core(
                    input,
                    l.spatial.data(),
                    l.spatial_dims(),
                    None,
                    (1, l.stride.1, l.stride.2),
                )?;
                let out = conv3d_core(
                    &s,
                    l.temporal.data(),
                    l.temporal_dims(),
                    Some(&l.bias),
                    (l.stride.0, 1, 1),
                )?;
                Ok((out, LayerAux::SpatialStage(s)))
            }
            Layer::Itgm(l) => {
                let s = conv3d_core(
                    input,
                    l.spatial.data(),
                    l.spatial_dims(),
                    None,
                    (1, l.stride.1, l.stride.2),
                )?;
                let kernel = build_gaussian_mixture_kernel(&l.tgm)?;
                let out = temporal_depthwise(&s, &kernel, l.stride.0, Some(&l.bias))?;
                Ok((out, LayerAux::SpatialStage(s)))
            }
            Layer::Conv1x1x1(l) => Ok((conv1x1x1_forward(input, l)?, LayerAux::None)),
            Layer::Pool(l) => Ok((pool_forward(input, l)?, LayerAux::None)),
        }
    }

    /// Exact gradients of the forward map. Recomputes composite-layer
    /// intermediates; use [`Layer::backward_aux`] when the forward pass
    /// already saved them.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, LayerGrads), KernelError> {
        let (_, aux) = self.forward_aux(input)?;
        self.backward_aux(input, &aux, grad_out)
    }

    pub fn backward_aux(
        &self,
        input: &Tensor,
        aux: &LayerAux,
        grad_out: &Tensor,
    ) -> Result<(Tensor, LayerGrads), KernelError> {
        match self {
            Layer::Conv3d(l) => {
                let (gi, gw, gb) =
                    conv3d_core_backward(input, l.weight.data(), l.dims(), l.stride, grad_out)?;
                Ok((gi, LayerGrads::Conv3d { weight: gw, bias: gb }))
            }
            Layer::Conv2Plus1d(l) => {
                let s = match aux {
                    LayerAux::SpatialStage(s) => s.clone(),
                    LayerAux::None => conv3d_core(
                        input,
                        l.spatial.data(),
                        l.spatial_dims(),
                        None,
                        (1, l.stride.1, l.stride.2),
                    )?,
                };
                let (g_s, g_tw, g_b) = conv3d_core_backward(
                    &s,
                    l.temporal.data(),
                    l.temporal_dims(),
                    (l.stride.0, 1, 1),
                    grad_out,
                )?;
                let (g_in, g_sw, _) = conv3d_core_backward(
                    input,
                    l.spatial.data(),
                    l.spatial_dims(),
                    (1, l.stride.1, l.stride.2),
                    &g_s,
                )?;
                Ok((g_in, LayerGrads::Conv2Plus1d { spatial: g_sw, temporal: g_tw, bias: g_b }))
            }
            Layer::Itgm(l) => {
                let s = match aux {
                    LayerAux::SpatialStage(s) => s.clone(),
                    LayerAux::None => conv3d_core(
                        input,
                        l.spatial.data(),
                        l.spatial_dims(),
                        None,
                        (1, l.stride.1, l.stride.2),
                    )?,
                };
                let kernel = build_gaussian_mixture_kernel(&l.tgm)?;
                let (g_s, g_k, g_b) =
                    temporal_depthwise_backward(&s, &kernel, l.stride.0, grad_out)?;
                let tgm_grads = gaussian_mixture_kernel_backward(&l.tgm, &g_k)?;
                let (g_in, g_sw, _) = conv3d_core_backward(
                    input,
                    l.spatial.data(),
                    l.spatial_dims(),
                    (1, l.stride.1, l.stride.2),
                    &g_s,
                )?;
                Ok((g_in, LayerGrads::Itgm { spatial: g_sw, tgm: tgm_grads, bias: g_b }))
            }
            Layer::Conv1x1x1(l) => {
                let (gi, gw, gb) =
                    conv3d_core_backward(input, l.weight.data(), l.dims(), STRIDE_ONE, grad_out)?;
                Ok((gi, LayerGrads::Conv1x1x1 { weight: gw, bias: gb }))
            }
            Layer::Pool(l) => {
                let gi = pool_core_backward(
                    input,
                    l.kind,
                    l.temporal_len,
                    l.spatial_len,
                    l.stride,
                    grad_out,
                )?;
                Ok((gi, LayerGrads::Pool))
            }
        }
    }

    /// All learnable scalars in a fixed documented order:
    /// conv3d: weight, bias; (2+1)d: spatial, temporal, bias;
    /// itgm: spatial, mu_hat, sigma_hat, a, bias; 1x1: weight, bias.
    pub fn params_flat(&self) -> Vec<f64> {
        match self {
            Layer::Conv3d(l) => {
                let mut v = l.weight.data().to_vec();
                v.extend_from_slice(&l.bias);
                v
            }
            Layer::Conv2Plus1d(l) => {
                let mut v = l.spatial.data().to_vec();
                v.extend_from_slice(l.temporal.data());
                v.extend_from_slice(&l.bias);
                v
            }
            Layer::Itgm(l) => {
                let mut v = l.spatial.data().to_vec();
                v.extend_from_slice(&l.tgm.mu_hat);
                v.extend_from_slice(&l.tgm.sigma_hat);
                v.extend_from_slice(l.tgm.a.data());
                v.extend_from_slice(&l.bias);
                v
            }
            Layer::Conv1x1x1(l) => {
                let mut v = l.weight.data().to_vec();
                v.extend_from_slice(&l.bias);
                v
            }
            Layer::Pool(_) => Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Layer::Conv3d(l) => l.weight.len() + l.bias.len(),
            Layer::Conv2Plus1d(l) => l.spatial.len() + l.temporal.len() + l.bias.len(),
            Layer::Itgm(l) => l.weight_param_count() + l.bias.len(),
            Layer::Conv1x1x1(l) => l.weight.len() + l.bias.len(),
            Layer::Pool(_) => 0,
        }
    }

    pub fn load_params_flat(&mut self, vals: &[f64]) -> Result<(), KernelError> {
        if vals.len() != self.num_params() {
            return Err(KernelError::ShapeMismatch(format!(
                "layer expects {} parameters, got {}",
                self.num_params(),
                vals.len()
            )));
        }
        fn split(vals: &[f64], n: usize) -> (&[f64], &[f64]) {
            vals.split_at(n)
        }
        match self {
            Layer::Conv3d(l) => {
                let (w, b) = split(vals, l.weight.len());
                l.weight.data_mut().copy_from_slice(w);
                l.bias.copy_from_slice(b);
            }
            Layer::Conv2Plus1d(l) => {
                let (s, rest) = split(vals, l.spatial.len());
                let (t, b) = split(rest, l.temporal.len());
                l.spatial.data_mut().copy_from_slice(s);
                l.temporal.data_mut().copy_from_slice(t);
                l.bias.copy_from_slice(b);
            }
            Layer::Itgm(l) => {
                let m = l.tgm.mixtures();
                let (s, rest) = split(vals, l.spatial.len());
                let (mu, rest) = split(rest, m);
                let (sg, rest) = split(rest, m);
                let (a, b) = split(rest, l.tgm.a.len());
                l.spatial.data_mut().copy_from_slice(s);
                l.tgm.mu_hat.copy_from_slice(mu);
                l.tgm.sigma_hat.copy_from_slice(sg);
                l.tgm.a.data_mut().copy_from_slice(a);
                l.bias.copy_from_slice(b);
            }
            Layer::Conv1x1x1(l) => {
                let (w, b) = split(vals, l.weight.len());
                l.weight.data_mut().copy_from_slice(w);
                l.bias.copy_from_slice(b);
            }
            Layer::Pool(_) => {}
        }
        Ok(())
    }
}

/// Gradients of any layer's forward map with respect to its input and
/// parameters.
pub fn layer_backward(
    layer: &Layer,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, LayerGrads), KernelError> {
    layer.backward(input, grad_out)
}
