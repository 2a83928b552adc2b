//! Temporal Gaussian mixture kernels.
//!
//! A TGM parameterizes a Cout×L temporal kernel through M Gaussians with
//! unconstrained centers `mu_hat` and widths `sigma_hat`, mixed per output
//! channel by soft-attention weights `a`. Centers map to [0, L-1] through a
//! tanh squashing, variances through exp, and every kernel row is a convex
//! combination of normalized Gaussian rows, so rows sum to 1 and stay
//! non-negative for any parameter values.

use super::tensor::Tensor;
use super::KernelError;

/// Floor applied to row normalizers.
const Z_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct TGMParams {
    /// Unconstrained center parameters, length M.
    pub mu_hat: Vec<f64>,
    /// Unconstrained width parameters, length M.
    pub sigma_hat: Vec<f64>,
    /// Soft-attention mixing weights, Cout×M.
    pub a: Tensor,
    /// Temporal length L in frames.
    pub temporal_len: usize,
}

impl TGMParams {
    pub fn new(
        mu_hat: Vec<f64>,
        sigma_hat: Vec<f64>,
        a: Tensor,
        temporal_len: usize,
    ) -> Result<TGMParams, KernelError> {
        let m = mu_hat.len();
        if m == 0 {
            return Err(KernelError::InvalidParam("TGM needs at least one mixture".into()));
        }
        if sigma_hat.len() != m {
            return Err(KernelError::ShapeMismatch(format!(
                "sigma_hat length {} != mu_hat length {m}",
                sigma_hat.len()
            )));
        }
        if a.shape().len() != 2 || a.shape()[1] != m {
            return Err(KernelError::ShapeMismatch(format!(
                "mixing weights must be Cout*{m}, got {:?}",
                a.shape()
            )));
        }
        if temporal_len == 0 {
            return Err(KernelError::InvalidParam("temporal length must be positive".into()));
        }
        if m > temporal_len {
            return Err(KernelError::InvalidParam(format!(
                "mixture count {m} exceeds temporal length {temporal_len}"
            )));
        }
        Ok(TGMParams { mu_hat, sigma_hat, a, temporal_len })
    }

    /// Default initialization: centers equally spaced in [-1, 1], unit
    /// widths, uniform mixing.
    pub fn init(mixtures: usize, out_channels: usize, temporal_len: usize) -> TGMParams {
        let m = mixtures.max(1);
        let mu_hat = if m == 1 {
            vec![0.0]
        } else {
            (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect()
        };
        TGMParams {
            mu_hat,
            sigma_hat: vec![0.0; m],
            a: Tensor::zeros(&[out_channels, m]),
            temporal_len,
        }
    }

    pub fn mixtures(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn out_channels(&self) -> usize {
        self.a.shape()[0]
    }

    /// Derived centers mu_m = (L-1)/2 * (tanh(mu_hat) + 1), in [0, L-1].
    pub fn derived_centers(&self) -> Vec<f64> {
        let half = (self.temporal_len as f64 - 1.0) / 2.0;
        self.mu_hat.iter().map(|m| half * (m.tanh() + 1.0)).collect()
    }

    /// Derived variances sigma^2_m = exp(sigma_hat), always positive.
    pub fn derived_variances(&self) -> Vec<f64> {
        self.sigma_hat.iter().map(|s| s.exp()).collect()
    }

    /// Learnable parameter count: 2M centers/widths plus M*Cout mixing
    /// weights. Independent of the temporal length.
    pub fn param_count(&self) -> usize {
        2 * self.mixtures() + self.mixtures() * self.out_channels()
    }
}

fn softmax_rows_inplace(rows: &mut [f64], cols: usize) {
    for row in rows.chunks_mut(cols) {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        let z = z.max(Z_FLOOR);
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Normalized single-Gaussian rows, M×L: each row is softmax over taps of
/// the exponent -(l - mu_m)^2 / (2 sigma^2_m).
fn gaussian_rows(params: &TGMParams) -> Tensor {
    let m = params.mixtures();
    let l = params.temporal_len;
    let centers = params.derived_centers();
    let variances = params.derived_variances();
    let mut rows = Tensor::zeros(&[m, l]);
    for mi in 0..m {
        for li in 0..l {
            let d = li as f64 - centers[mi];
            rows.data_mut()[mi * l + li] = -d * d / (2.0 * variances[mi]);
        }
    }
    softmax_rows_inplace(rows.data_mut(), l);
    rows
}

/// Per-channel softmax of the mixing logits, Cout×M.
fn mixing_weights(params: &TGMParams) -> Tensor {
    let mut w = params.a.clone();
    let m = params.mixtures();
    softmax_rows_inplace(w.data_mut(), m);
    w
}

/// Materialize the Cout×L mixture kernel. Every row sums to 1 and is
/// non-negative.
pub fn build_gaussian_mixture_kernel(params: &TGMParams) -> Result<Tensor, KernelError> {
    if !(params.mu_hat.iter().all(|v| v.is_finite())
        && params.sigma_hat.iter().all(|v| v.is_finite())
        && params.a.all_finite())
    {
        return Err(KernelError::NonFinite("TGM parameters contain non-finite values".into()));
    }
    let m = params.mixtures();
    let l = params.temporal_len;
    let cout = params.out_channels();
    let rows = gaussian_rows(params);
    let weights = mixing_weights(params);
    let mut kernel = Tensor::zeros(&[cout, l]);
    for i in 0..cout {
        for mi in 0..m {
            let w = weights.data()[i * m + mi];
            for li in 0..l {
                kernel.data_mut()[i * l + li] += w * rows.data()[mi * l + li];
            }
        }
    }
    Ok(kernel)
}

/// Gradients of the TGM parameters given the loss gradient of the
/// materialized kernel.
#[derive(Debug, Clone)]
pub struct TgmGrads {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub a: Tensor,
}

/// Backward pass through kernel construction: both the per-channel mixing
/// softmax and the per-Gaussian tap softmax differentiate via the standard
/// softmax Jacobian; centers and widths then pull back through the tanh and
/// exp reparameterizations.
pub fn gaussian_mixture_kernel_backward(params: &TGMParams, grad_kernel: &Tensor) -> Result<TgmGrads, KernelError> {
    let m = params.mixtures();
    let l = params.temporal_len;
    let cout = params.out_channels();
    if grad_kernel.shape() != [cout, l] {
        return Err(KernelError::ShapeMismatch(format!(
            "kernel gradient must be {cout}*{l}, got {:?}",
            grad_kernel.shape()
        )));
    }
    let rows = gaussian_rows(params);
    let weights = mixing_weights(params);
    let centers = params.derived_centers();
    let variances = params.derived_variances();
    let gk = grad_kernel.data();

    // d/dw[i,m] = sum_l gk[i,l] rows[m,l]; softmax Jacobian back to a.
    let mut grad_a = Tensor::zeros(&[cout, m]);
    // d/drows[m,l] = sum_i gk[i,l] w[i,m]
    let mut grad_rows = vec![0.0; m * l];
    for i in 0..cout {
        let mut g_w = vec![0.0; m];
        for mi in 0..m {
            let mut acc = 0.0;
            for li in 0..l {
                acc += gk[i * l + li] * rows.data()[mi * l + li];
            }
            g_w[mi] = acc;
        }
        let w_row = &weights.data()[i * m..(i + 1) * m];
        let dot: f64 = g_w.iter().zip(w_row).map(|(g, w)| g * w).sum();
        for mi in 0..m {
            grad_a.data_mut()[i * m + mi] = w_row[mi] * (g_w[mi] - dot);
            let w = w_row[mi];
            for li in 0..l {
                grad_rows[mi * l + li] += gk[i * l + li] * w;
            }
        }
    }

    // Rows are a softmax over the exponent e[m,l] = -(l-mu)^2/(2 v); pull the
    // row gradient back through that softmax, then to mu_hat and sigma_hat.
    let half = (l as f64 - 1.0) / 2.0;
    let mut grad_mu_hat = vec![0.0; m];
    let mut grad_sigma_hat = vec![0.0; m];
    for mi in 0..m {
        let row = &rows.data()[mi * l..(mi + 1) * l];
        let g_row = &grad_rows[mi * l..(mi + 1) * l];
        let dot: f64 = g_row.iter().zip(row).map(|(g, r)| g * r).sum();
        let v = variances[mi];
        let mut g_mu = 0.0;
        let mut g_v = 0.0;
        for li in 0..l {
            let g_e = row[li] * (g_row[li] - dot);
            let d = li as f64 - centers[mi];
            g_mu += g_e * d / v;
            g_v += g_e * d * d / (2.0 * v * v);
        }
        // mu = half*(tanh(mu_hat)+1); v = exp(sigma_hat)
        let sech2 = 1.0 - params.mu_hat[mi].tanh().powi(2);
        grad_mu_hat[mi] = g_mu * half * sech2;
        grad_sigma_hat[mi] = g_v * v;
    }

    Ok(TgmGrads { mu_hat: grad_mu_hat, sigma_hat: grad_sigma_hat, a: grad_a })
}

/// Re-instantiate the mixture at a longer temporal length, scaling derived
/// centers and widths by (L'-1)/(L-1).
///
/// Under the tanh reparameterization the relative center positions
/// mu/(L-1) are preserved exactly by keeping `mu_hat`; widths scale by
/// adding 2*ln(ratio) to `sigma_hat`. Mixing weights are unchanged.
pub fn stretch_itgm(params: &TGMParams, new_len: usize) -> Result<TGMParams, KernelError> {
    if params.temporal_len <= 1 {
        return Err(KernelError::InvalidParam(
            "cannot stretch a length-1 kernel: center/width ratio undefined".into(),
        ));
    }
    if new_len < params.temporal_len {
        return Err(KernelError::InvalidParam(format!(
            "stretch target {new_len} shorter than source {}",
            params.temporal_len
        )));
    }
    let ratio = (new_len as f64 - 1.0) / (params.temporal_len as f64 - 1.0);
    let sigma_hat = params.sigma_hat.iter().map(|s| s + 2.0 * ratio.ln()).collect();
    Ok(TGMParams {
        mu_hat: params.mu_hat.clone(),
        sigma_hat,
        a: params.a.clone(),
        temporal_len: new_len,
    })
}
