//! Layer parameter dump format.
//!
//! One dumped layer is a single-line JSON header followed by the layer's
//! flattened parameters as 64-bit little-endian reals:
//!
//! ```text
//! {"path":"stem.0","kind":"conv3d","shape":[[3,3,3,1,4],[4]],"tgm":null}\n
//! <8 * sum(prod(shape_i)) raw bytes>
//! ```
//!
//! `shape` lists the constituent tensors in the order they appear in the
//! flat data (the [`Layer::params_flat`] order). iTGM layers additionally
//! carry their mixture header `{M, L, mu_hat, sigma_hat}`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::layers::Layer;
use super::tensor::Tensor;
use super::tgm::TGMParams;
use super::KernelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TgmHeader {
    #[serde(rename = "M")]
    pub mixtures: usize,
    #[serde(rename = "L")]
    pub temporal_len: usize,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpHeader {
    path: String,
    kind: String,
    shape: Vec<Vec<usize>>,
    tgm: Option<TgmHeader>,
}

/// A parsed layer dump: header fields plus the flat parameter data.
#[derive(Debug, Clone)]
pub struct LayerDump {
    pub path: String,
    pub kind: String,
    pub shape: Vec<Vec<usize>>,
    pub tgm: Option<TgmHeader>,
    pub data: Vec<f64>,
}

impl LayerDump {
    /// Reassemble TGM parameters for an iTGM dump. The mixing matrix lives
    /// in the flat data right after the spatial weights and mixture vectors.
    pub fn itgm_params(&self) -> Result<TGMParams, KernelError> {
        let header = self
            .tgm
            .as_ref()
            .ok_or_else(|| KernelError::InvalidParam(format!("layer `{}` is not an iTGM layer", self.path)))?;
        let m = header.mixtures;
        let spatial_len: usize = self.shape.first().map(|s| s.iter().product()).unwrap_or(0);
        let cout = *self
            .shape
            .first()
            .and_then(|s| s.last())
            .ok_or_else(|| KernelError::InvalidParam("iTGM dump missing spatial shape".into()))?;
        let a_start = spatial_len + 2 * m;
        let a_end = a_start + cout * m;
        if self.data.len() < a_end {
            return Err(KernelError::ShapeMismatch(format!(
                "iTGM dump for `{}` holds {} values, needs at least {a_end}",
                self.path,
                self.data.len()
            )));
        }
        let a = Tensor::from_vec(&[cout, m], self.data[a_start..a_end].to_vec())?;
        TGMParams::new(header.mu_hat.clone(), header.sigma_hat.clone(), a, header.temporal_len)
    }
}

fn shapes_of(layer: &Layer) -> Vec<Vec<usize>> {
    match layer {
        Layer::Conv3d(l) => vec![l.weight.shape().to_vec(), vec![l.bias.len()]],
        Layer::Conv2Plus1d(l) => vec![
            l.spatial.shape().to_vec(),
            l.temporal.shape().to_vec(),
            vec![l.bias.len()],
        ],
        Layer::Itgm(l) => vec![
            l.spatial.shape().to_vec(),
            vec![l.tgm.mixtures()],
            vec![l.tgm.mixtures()],
            l.tgm.a.shape().to_vec(),
            vec![l.bias.len()],
        ],
        Layer::Conv1x1x1(l) => vec![l.weight.shape().to_vec(), vec![l.bias.len()]],
        Layer::Pool(_) => vec![],
    }
}

/// Write one layer in dump format.
pub fn write_layer_dump(w: &mut impl Write, path: &str, layer: &Layer) -> io::Result<()> {
    let tgm = match layer {
        Layer::Itgm(l) => Some(TgmHeader {
            mixtures: l.tgm.mixtures(),
            temporal_len: l.tgm.temporal_len,
            mu_hat: l.tgm.mu_hat.clone(),
            sigma_hat: l.tgm.sigma_hat.clone(),
        }),
        _ => None,
    };
    let header = DumpHeader {
        path: path.to_string(),
        kind: layer.kind_name().to_string(),
        shape: shapes_of(layer),
        tgm,
    };
    let mut line = serde_json::to_string(&header).expect("dump header serialization cannot fail");
    line.push('\n');
    w.write_all(line.as_bytes())?;
    for v in layer.params_flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read the next layer dump, or `None` at end of input.
pub fn read_layer_dump(r: &mut impl BufRead) -> io::Result<Option<LayerDump>> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    let header: DumpHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("bad dump header: {e}")))?;
    let count: usize = header.shape.iter().map(|s| s.iter().product::<usize>()).sum();
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Some(LayerDump {
        path: header.path,
        kind: header.kind,
        shape: header.shape,
        tgm: header.tgm,
        data,
    }))
}
