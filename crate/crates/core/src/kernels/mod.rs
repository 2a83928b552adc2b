//! Numerical core: tensors, Gaussian-mixture temporal kernels, forward and
//! backward passes for every layer kind, parameter counting and the layer
//! dump format.
//!
//! All operations are pure given their inputs; reductions run in a fixed
//! sequential order per output element, so results are bitwise reproducible.

mod dump;
mod layers;
mod tensor;
mod tgm;

pub use dump::{read_layer_dump, write_layer_dump, LayerDump};
pub use layers::{
    conv1x1x1_forward, conv2plus1d_forward, conv3d_forward, itgm_forward, layer_backward,
    pool_forward, Conv1x1x1, Conv2Plus1d, Conv3d, ItgmLayer, Layer, LayerAux, LayerGrads,
    PoolKind, PoolLayer, Stride3,
};
pub use tensor::{feature_dims, Tensor};
pub use tgm::{
    build_gaussian_mixture_kernel, gaussian_mixture_kernel_backward, stretch_itgm, TGMParams,
    TgmGrads,
};

use crate::genome::LayerKind;

#[derive(Debug, Clone, thiserror::Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Weight parameters of one layer, excluding bias. Spatial extent is
/// implicit in the kind (3x3 for space-time convs and pools, 1x1 for
/// pointwise). `mixtures` only matters for iTGM.
pub fn param_count(
    kind: LayerKind,
    temporal_len: usize,
    cin: usize,
    cout: usize,
    mixtures: usize,
) -> u64 {
    let s = kind.spatial_extent() as u64;
    let (l, cin, cout, m) = (temporal_len as u64, cin as u64, cout as u64, mixtures as u64);
    match kind {
        LayerKind::Conv3D => l * s * s * cin * cout,
        LayerKind::Conv2Plus1D => s * s * cin * cout + l * cout * cout,
        LayerKind::ConvITGM => s * s * cin * cout + 2 * m + m * cout,
        LayerKind::Conv1x1x1 => cin * cout,
        LayerKind::MaxPool | LayerKind::AvgPool => 0,
    }
}
