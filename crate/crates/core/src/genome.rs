//! The architecture search space as data.
//!
//! A [`Genome`] describes a complete spatio-temporal CNN: a meta-architecture
//! kind fixing the high-level skeleton, a stem of fixed layer kinds with
//! evolvable temporal lengths, and a list of evolvable modules. Each module
//! holds 1–6 parallel streams of four fixed shapes, a repeat count, and a
//! fixed total output channel budget split evenly across streams.
//!
//! Everything here is a pure value type; all operations are side-effect-free
//! and safe to call concurrently.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kernels::param_count;
use crate::rng::derive_rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Temporal kernel sizes available to space-time convolutions and pools.
pub const UNIVERSAL_TEMPORAL_LENS: [usize; 6] = [1, 3, 5, 7, 9, 11];

/// Hard cap on parallel streams per module.
pub const MAX_STREAMS: usize = 6;

/// Hard cap on module repeats.
pub const MAX_REPEATS: usize = 6;

/// Default mixture count for iTGM layers; capped at the temporal length.
pub const DEFAULT_MIXTURES: usize = 4;

/// Mixture count actually used by an iTGM layer of temporal length `l`.
pub fn effective_mixtures(temporal_len: usize) -> usize {
    DEFAULT_MIXTURES.min(temporal_len.max(1))
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GenomeError {
    #[error("invalid search constraints: {0}")]
    InvalidConstraints(String),
    #[error("genome parse error: {0}")]
    Parse(String),
    #[error("invalid genome: {0}")]
    Invalid(String),
}

/// Layer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "conv3d")]
    Conv3D,
    #[serde(rename = "conv21d")]
    Conv2Plus1D,
    #[serde(rename = "itgm")]
    ConvITGM,
    #[serde(rename = "conv1x1")]
    Conv1x1x1,
    #[serde(rename = "maxpool")]
    MaxPool,
    #[serde(rename = "avgpool")]
    AvgPool,
}

impl LayerKind {
    /// The three space-time convolution kinds.
    pub fn is_space_time_conv(self) -> bool {
        matches!(self, LayerKind::Conv3D | LayerKind::Conv2Plus1D | LayerKind::ConvITGM)
    }

    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::MaxPool | LayerKind::AvgPool)
    }

    /// Implicit spatial extent: 3x3 for space-time convs and pools, 1x1 for
    /// pointwise convolutions.
    pub fn spatial_extent(self) -> usize {
        match self {
            LayerKind::Conv1x1x1 => 1,
            _ => 3,
        }
    }

    pub fn json_name(self) -> &'static str {
        match self {
            LayerKind::Conv3D => "conv3d",
            LayerKind::Conv2Plus1D => "conv21d",
            LayerKind::ConvITGM => "itgm",
            LayerKind::Conv1x1x1 => "conv1x1",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.json_name())
    }
}

/// One layer slot: kind, temporal length in frames, output filters.
///
/// For pooling layers `out_channels` records the stream's channel share like
/// every other layer in the stream; pooling itself is channel-preserving and
/// the share is realized by the following 1x1x1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(rename = "t")]
    pub temporal_len: usize,
    #[serde(rename = "c")]
    pub out_channels: usize,
}

/// The four stream shapes a module may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreamType {
    /// One 1x1x1 convolution.
    #[serde(rename = "t1")]
    T1Only1x1,
    /// One 1x1x1 followed by one space-time convolution.
    #[serde(rename = "t2")]
    T2OneSTConv,
    /// One 1x1x1 followed by two space-time convolutions.
    #[serde(rename = "t3")]
    T3TwoSTConv,
    /// A space-time pooling followed by one 1x1x1.
    #[serde(rename = "t4")]
    T4PoolThen1x1,
}

impl StreamType {
    pub const ALL: [StreamType; 4] = [
        StreamType::T1Only1x1,
        StreamType::T2OneSTConv,
        StreamType::T3TwoSTConv,
        StreamType::T4PoolThen1x1,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    #[serde(rename = "type")]
    pub stream_type: StreamType,
    pub layers: Vec<LayerSpec>,
}

impl StreamSpec {
    /// Sort key used wherever streams are compared up to permutation.
    pub fn sort_key(&self) -> (StreamType, Vec<(LayerKind, usize)>) {
        (
            self.stream_type,
            self.layers.iter().map(|l| (l.kind, l.temporal_len)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub repeats: usize,
    #[serde(rename = "out_channels")]
    pub total_out_channels: usize,
    pub streams: Vec<StreamSpec>,
}

/// Even channel split with the remainder assigned to the first stream.
pub fn split_channels(total: usize, streams: usize) -> Vec<usize> {
    assert!(streams > 0, "split_channels: zero streams");
    let base = total / streams;
    let rem = total % streams;
    (0..streams).map(|i| if i == 0 { base + rem } else { base }).collect()
}

impl ModuleSpec {
    /// Channel share of each stream under the even-split rule.
    pub fn stream_shares(&self) -> Vec<usize> {
        split_channels(self.total_out_channels, self.streams.len().max(1))
    }

    /// Rewrite every layer's `out_channels` to its stream's share.
    pub fn assign_stream_channels(&mut self) {
        let shares = self.stream_shares();
        for (stream, share) in self.streams.iter_mut().zip(shares) {
            for layer in &mut stream.layers {
                layer.out_channels = share;
            }
        }
    }
}

/// Meta-architecture kind: the fixed high-level skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaKind {
    #[serde(rename = "inception")]
    InceptionLike,
    #[serde(rename = "resnet")]
    ResNetLike,
    #[serde(rename = "toy")]
    Toy,
}

impl MetaKind {
    pub fn module_count(self) -> usize {
        match self {
            MetaKind::InceptionLike => 9,
            MetaKind::ResNetLike => 4,
            MetaKind::Toy => 2,
        }
    }

    pub fn stem_len(self) -> usize {
        match self {
            MetaKind::InceptionLike => 5,
            MetaKind::ResNetLike => 2,
            MetaKind::Toy => 1,
        }
    }

    /// Repeat counts are evolvable for the residual metas only; the
    /// Inception-like meta fixes repeats to 1.
    pub fn repeats_evolvable(self) -> bool {
        !matches!(self, MetaKind::InceptionLike)
    }

    /// Residual add around each module repeat.
    pub fn residual(self) -> bool {
        !matches!(self, MetaKind::InceptionLike)
    }

    /// Default width multiplier: full width for the large metas,
    /// desk scale for Toy fitness runs.
    pub fn default_channel_scale(self) -> f64 {
        match self {
            MetaKind::Toy => 0.0625,
            _ => 1.0,
        }
    }

    pub fn json_name(self) -> &'static str {
        match self {
            MetaKind::InceptionLike => "inception",
            MetaKind::ResNetLike => "resnet",
            MetaKind::Toy => "toy",
        }
    }
}

impl fmt::Display for MetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.json_name())
    }
}

/// One stem slot in a meta template.
#[derive(Debug, Clone, Copy)]
pub struct StemSlot {
    pub kind: LayerKind,
    pub base_channels: usize,
    pub default_temporal: usize,
    /// Only space-time conv slots have evolvable temporal lengths.
    pub temporal_evolvable: bool,
    pub spatial_stride: usize,
}

/// Fixed skeleton of a meta-architecture.
#[derive(Debug, Clone)]
pub struct MetaTemplate {
    pub stem: Vec<StemSlot>,
    pub module_base_channels: Vec<usize>,
}

impl MetaKind {
    pub fn template(self) -> MetaTemplate {
        let conv = |c, t, s| StemSlot {
            kind: LayerKind::Conv3D,
            base_channels: c,
            default_temporal: t,
            temporal_evolvable: true,
            spatial_stride: s,
        };
        let pool = |s| StemSlot {
            kind: LayerKind::MaxPool,
            base_channels: 0,
            default_temporal: 1,
            temporal_evolvable: false,
            spatial_stride: s,
        };
        let pointwise = |c| StemSlot {
            kind: LayerKind::Conv1x1x1,
            base_channels: c,
            default_temporal: 1,
            temporal_evolvable: false,
            spatial_stride: 1,
        };
        match self {
            MetaKind::InceptionLike => MetaTemplate {
                stem: vec![conv(64, 7, 2), pool(2), pointwise(64), conv(192, 3, 1), pool(2)],
                module_base_channels: vec![256, 320, 576, 576, 576, 576, 576, 1024, 1024],
            },
            MetaKind::ResNetLike => MetaTemplate {
                stem: vec![conv(64, 7, 2), conv(192, 3, 2)],
                module_base_channels: vec![256, 512, 1024, 2048],
            },
            MetaKind::Toy => MetaTemplate {
                stem: vec![conv(64, 5, 2)],
                module_base_channels: vec![128, 256],
            },
        }
    }
}

/// Width scaling applied to base channel counts.
pub fn scaled_channels(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(1)
}

/// A complete architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genome {
    pub meta: MetaKind,
    pub channel_scale: f64,
    pub stem: Vec<LayerSpec>,
    pub modules: Vec<ModuleSpec>,
}

/// Bounds on the sampled/mutated space. Defaults reproduce the full space;
/// narrowing `conv_kinds` reproduces the search-without-iTGM ablation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConstraints {
    pub allowed_temporal_lens: BTreeSet<usize>,
    pub max_streams: usize,
    pub max_repeats: usize,
    pub conv_kinds: BTreeSet<LayerKind>,
    pub pool_kinds: BTreeSet<LayerKind>,
}

impl Default for SearchConstraints {
    fn default() -> Self {
        SearchConstraints {
            allowed_temporal_lens: UNIVERSAL_TEMPORAL_LENS.into_iter().collect(),
            max_streams: MAX_STREAMS,
            max_repeats: MAX_REPEATS,
            conv_kinds: [LayerKind::Conv3D, LayerKind::Conv2Plus1D, LayerKind::ConvITGM]
                .into_iter()
                .collect(),
            pool_kinds: [LayerKind::MaxPool].into_iter().collect(),
        }
    }
}

impl SearchConstraints {
    pub fn validate(&self) -> Result<(), GenomeError> {
        let err = |m: &str| Err(GenomeError::InvalidConstraints(m.to_string()));
        if self.allowed_temporal_lens.is_empty() {
            return err("allowed_temporal_lens is empty");
        }
        if let Some(&bad) = self
            .allowed_temporal_lens
            .iter()
            .find(|l| !UNIVERSAL_TEMPORAL_LENS.contains(l))
        {
            return Err(GenomeError::InvalidConstraints(format!(
                "temporal length {bad} not in {UNIVERSAL_TEMPORAL_LENS:?}"
            )));
        }
        if self.max_streams == 0 || self.max_streams > MAX_STREAMS {
            return err("max_streams must be in 1..=6");
        }
        if self.max_repeats == 0 || self.max_repeats > MAX_REPEATS {
            return err("max_repeats must be in 1..=6");
        }
        if self.conv_kinds.is_empty() || self.conv_kinds.iter().any(|k| !k.is_space_time_conv()) {
            return err("conv_kinds must be a non-empty subset of the space-time conv kinds");
        }
        if self.pool_kinds.is_empty() || self.pool_kinds.iter().any(|k| !k.is_pool()) {
            return err("pool_kinds must be a non-empty subset of {maxpool, avgpool}");
        }
        Ok(())
    }

    pub fn temporal_lens_vec(&self) -> Vec<usize> {
        self.allowed_temporal_lens.iter().copied().collect()
    }

    pub fn conv_kinds_vec(&self) -> Vec<LayerKind> {
        self.conv_kinds.iter().copied().collect()
    }

    pub fn pool_kinds_vec(&self) -> Vec<LayerKind> {
        self.pool_kinds.iter().copied().collect()
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn sample_stream(
    stream_type: StreamType,
    constraints: &SearchConstraints,
    rng: &mut impl Rng,
) -> StreamSpec {
    let lens = constraints.temporal_lens_vec();
    let convs = constraints.conv_kinds_vec();
    let pools = constraints.pool_kinds_vec();
    let st_conv = |rng: &mut dyn rand::RngCore| LayerSpec {
        kind: *convs.choose(rng).expect("non-empty conv kinds"),
        temporal_len: *lens.choose(rng).expect("non-empty temporal lens"),
        out_channels: 1,
    };
    let pointwise = LayerSpec { kind: LayerKind::Conv1x1x1, temporal_len: 1, out_channels: 1 };
    let layers = match stream_type {
        StreamType::T1Only1x1 => vec![pointwise],
        StreamType::T2OneSTConv => vec![pointwise, st_conv(rng)],
        StreamType::T3TwoSTConv => vec![pointwise, st_conv(rng), st_conv(rng)],
        StreamType::T4PoolThen1x1 => vec![
            LayerSpec {
                kind: *pools.choose(rng).expect("non-empty pool kinds"),
                temporal_len: *lens.choose(rng).expect("non-empty temporal lens"),
                out_channels: 1,
            },
            pointwise,
        ],
    };
    StreamSpec { stream_type, layers }
}

/// Sample a fresh stream of a uniformly chosen type. Channels are assigned
/// by the caller via [`ModuleSpec::assign_stream_channels`].
pub fn sample_stream_uniform(constraints: &SearchConstraints, rng: &mut impl Rng) -> StreamSpec {
    let ty = *StreamType::ALL.choose(rng).expect("non-empty");
    sample_stream(ty, constraints, rng)
}

/// Draw a random genome from the constrained space.
///
/// Deterministic given `seed`. The caller is responsible for constraint
/// validity (see [`SearchConstraints::validate`]); the defaults are valid.
pub fn sample_random_genome(meta: MetaKind, constraints: &SearchConstraints, seed: u64) -> Genome {
    constraints.validate().expect("sample_random_genome: invalid constraints");
    let mut rng = derive_rng(seed, "genome-sample", 0);
    let template = meta.template();
    let scale = meta.default_channel_scale();
    let lens = constraints.temporal_lens_vec();

    let stem = template
        .stem
        .iter()
        .map(|slot| LayerSpec {
            kind: slot.kind,
            temporal_len: if slot.temporal_evolvable {
                *lens.choose(&mut rng).expect("non-empty temporal lens")
            } else {
                slot.default_temporal
            },
            out_channels: if slot.kind.is_pool() { 0 } else { scaled_channels(slot.base_channels, scale) },
        })
        .collect();

    let modules = template
        .module_base_channels
        .iter()
        .map(|&base| {
            let total = scaled_channels(base, scale);
            let max_streams = constraints.max_streams.min(total).max(1);
            let n_streams = rng.gen_range(1..=max_streams);
            let mut module = ModuleSpec {
                repeats: if meta.repeats_evolvable() {
                    rng.gen_range(1..=constraints.max_repeats)
                } else {
                    1
                },
                total_out_channels: total,
                streams: (0..n_streams).map(|_| sample_stream_uniform(constraints, &mut rng)).collect(),
            };
            module.assign_stream_channels();
            module
        })
        .collect();

    Genome { meta, channel_scale: scale, stem, modules }
}

/// The canonical hand-written genome for a meta kind: template defaults with
/// single T2 streams. Useful as a reference input for training commands.
pub fn reference_genome(meta: MetaKind) -> Genome {
    let template = meta.template();
    let scale = meta.default_channel_scale();
    let stem = template
        .stem
        .iter()
        .map(|slot| LayerSpec {
            kind: slot.kind,
            temporal_len: slot.default_temporal,
            out_channels: if slot.kind.is_pool() { 0 } else { scaled_channels(slot.base_channels, scale) },
        })
        .collect();
    let modules = template
        .module_base_channels
        .iter()
        .map(|&base| {
            let total = scaled_channels(base, scale);
            let mut module = ModuleSpec {
                repeats: 1,
                total_out_channels: total,
                streams: vec![StreamSpec {
                    stream_type: StreamType::T2OneSTConv,
                    layers: vec![
                        LayerSpec { kind: LayerKind::Conv1x1x1, temporal_len: 1, out_channels: 1 },
                        LayerSpec { kind: LayerKind::Conv3D, temporal_len: 3, out_channels: 1 },
                    ],
                }],
            };
            module.assign_stream_channels();
            module
        })
        .collect();
    Genome { meta, channel_scale: scale, stem, modules }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Result of [`validate`]: `ok` plus one message per violation, each naming
/// the offending module/stream/layer path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn expected_stream_pattern(stream_type: StreamType) -> &'static [&'static str] {
    match stream_type {
        StreamType::T1Only1x1 => &["1x1"],
        StreamType::T2OneSTConv => &["1x1", "st"],
        StreamType::T3TwoSTConv => &["1x1", "st", "st"],
        StreamType::T4PoolThen1x1 => &["pool", "1x1"],
    }
}

fn check_layer(layer: &LayerSpec, slot: &str, path: &str, out: &mut Vec<String>) {
    let matches_slot = match slot {
        "1x1" => layer.kind == LayerKind::Conv1x1x1,
        "st" => layer.kind.is_space_time_conv(),
        "pool" => layer.kind.is_pool(),
        _ => unreachable!(),
    };
    if !matches_slot {
        out.push(format!("{path}: kind {} does not fit stream slot `{slot}`", layer.kind));
    }
    if layer.kind == LayerKind::Conv1x1x1 {
        if layer.temporal_len != 1 {
            out.push(format!("{path}: conv1x1 temporal_len must be 1, got {}", layer.temporal_len));
        }
    } else if !UNIVERSAL_TEMPORAL_LENS.contains(&layer.temporal_len) {
        out.push(format!(
            "{path}: temporal_len not in allowed set ({} not in {UNIVERSAL_TEMPORAL_LENS:?})",
            layer.temporal_len
        ));
    }
}

/// Check every type invariant; returns a report rather than failing.
pub fn validate(genome: &Genome) -> ValidationReport {
    let mut v = Vec::new();
    let template = genome.meta.template();

    if !(genome.channel_scale.is_finite() && genome.channel_scale > 0.0) {
        v.push(format!("channel_scale must be positive and finite, got {}", genome.channel_scale));
    }

    if genome.stem.len() != template.stem.len() {
        v.push(format!(
            "stem: expected {} layers for meta {}, got {}",
            template.stem.len(),
            genome.meta,
            genome.stem.len()
        ));
    } else {
        for (i, (layer, slot)) in genome.stem.iter().zip(&template.stem).enumerate() {
            let path = format!("stem[{i}]");
            if layer.kind != slot.kind {
                v.push(format!("{path}: stem kind is fixed to {}, got {}", slot.kind, layer.kind));
            }
            if layer.kind == LayerKind::Conv1x1x1 || layer.kind.is_pool() {
                if layer.temporal_len != slot.default_temporal {
                    v.push(format!(
                        "{path}: temporal_len fixed to {} for this stem slot, got {}",
                        slot.default_temporal, layer.temporal_len
                    ));
                }
            } else if !UNIVERSAL_TEMPORAL_LENS.contains(&layer.temporal_len) {
                v.push(format!(
                    "{path}: temporal_len not in allowed set ({} not in {UNIVERSAL_TEMPORAL_LENS:?})",
                    layer.temporal_len
                ));
            }
            if !layer.kind.is_pool() && layer.out_channels == 0 {
                v.push(format!("{path}: out_channels must be positive"));
            }
        }
    }

    if genome.modules.len() != genome.meta.module_count() {
        v.push(format!(
            "modules: expected {} for meta {}, got {}",
            genome.meta.module_count(),
            genome.meta,
            genome.modules.len()
        ));
    }

    for (m, module) in genome.modules.iter().enumerate() {
        let mpath = format!("modules[{m}]");
        if module.streams.is_empty() || module.streams.len() > MAX_STREAMS {
            v.push(format!("{mpath}: streams > 6 or empty (got {})", module.streams.len()));
        }
        if module.repeats == 0 || module.repeats > MAX_REPEATS {
            v.push(format!("{mpath}: repeats must be in 1..=6, got {}", module.repeats));
        }
        if !genome.meta.repeats_evolvable() && module.repeats != 1 {
            v.push(format!("{mpath}: repeats fixed to 1 for meta {}, got {}", genome.meta, module.repeats));
        }
        if module.total_out_channels == 0 {
            v.push(format!("{mpath}: total_out_channels must be positive"));
        }
        if module.streams.is_empty() {
            continue;
        }
        let shares = module.stream_shares();
        for (s, stream) in module.streams.iter().enumerate() {
            let spath = format!("{mpath}.streams[{s}]");
            let pattern = expected_stream_pattern(stream.stream_type);
            if stream.layers.len() != pattern.len() {
                v.push(format!(
                    "{spath}: stream type expects {} layers, got {}",
                    pattern.len(),
                    stream.layers.len()
                ));
                continue;
            }
            for (l, (layer, slot)) in stream.layers.iter().zip(pattern).enumerate() {
                let lpath = format!("{spath}.layers[{l}]");
                check_layer(layer, slot, &lpath, &mut v);
                if layer.out_channels != shares[s] {
                    v.push(format!(
                        "{lpath}: out_channels {} does not match even-split share {}",
                        layer.out_channels, shares[s]
                    ));
                }
            }
        }
        if shares.contains(&0) {
            v.push(format!("{mpath}: more streams than output channels (a stream share is zero)"));
        }
    }

    ValidationReport { violations: v }
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

/// Weight parameters of the whole genome (biases excluded), accounting for
/// repeats and residual 1x1x1 projections. `input_channels` is the channel
/// count of the video fed to the stem.
pub fn count_genome_parameters(genome: &Genome, input_channels: usize) -> Result<u64, GenomeError> {
    let report = validate(genome);
    if !report.ok() {
        return Err(GenomeError::Invalid(report.violations.join("; ")));
    }
    let mut total: u64 = 0;
    let mut cin = input_channels;
    for layer in &genome.stem {
        total += layer_weight_count(layer, cin);
        if !layer.kind.is_pool() {
            cin = layer.out_channels;
        }
    }
    for module in &genome.modules {
        let out = module.total_out_channels;
        for rep in 0..module.repeats {
            let rep_in = if rep == 0 { cin } else { out };
            for stream in &module.streams {
                let mut stream_in = rep_in;
                for layer in &stream.layers {
                    total += layer_weight_count(layer, stream_in);
                    if !layer.kind.is_pool() {
                        stream_in = layer.out_channels;
                    }
                }
            }
            if genome.meta.residual() && rep_in != out {
                // Residual projection: 1x1x1 mapping the repeat input onto
                // the concatenated output width.
                total += (rep_in * out) as u64;
            }
        }
        cin = out;
    }
    Ok(total)
}

fn layer_weight_count(layer: &LayerSpec, cin: usize) -> u64 {
    param_count(
        layer.kind,
        layer.temporal_len,
        cin,
        layer.out_channels,
        effective_mixtures(layer.temporal_len),
    )
}

/// Per-layer choice counts: (space-time conv options, pooling options),
/// each including the "omit" option.
pub fn layer_option_count(constraints: &SearchConstraints) -> (usize, usize) {
    let lens = constraints.allowed_temporal_lens.len();
    (constraints.conv_kinds.len() * lens + 1, lens + 1)
}

/// log10 of the order estimate `conv^(stem + B*N) + pool^(D*N)` where `N` is
/// the meta's module count and `stem` its stem length. Computed in log space.
pub fn search_space_log10_size(
    constraints: &SearchConstraints,
    meta: MetaKind,
    max_convs_per_module: usize,
    max_pools_per_module: usize,
) -> f64 {
    assert!(max_convs_per_module >= 1 && max_pools_per_module >= 1);
    let (conv, pool) = layer_option_count(constraints);
    let n = meta.module_count() as f64;
    let log_a = (meta.stem_len() as f64 + max_convs_per_module as f64 * n) * (conv as f64).log10();
    let log_b = (max_pools_per_module as f64 * n) * (pool as f64).log10();
    let (hi, lo) = if log_a >= log_b { (log_a, log_b) } else { (log_b, log_a) };
    hi + (10f64.powf(lo - hi)).ln_1p() / std::f64::consts::LN_10
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serialize to the canonical JSON wire form, newline-terminated.
pub fn serialize_genome(genome: &Genome) -> String {
    let mut s = serde_json::to_string(genome).expect("genome serialization cannot fail");
    s.push('\n');
    s
}

/// Parse and validate a genome document. Syntax errors carry line/column;
/// invariant violations carry the violation list.
pub fn parse_genome(text: &str) -> Result<Genome, GenomeError> {
    let genome: Genome = serde_json::from_str(text).map_err(|e| GenomeError::Parse(e.to_string()))?;
    let report = validate(&genome);
    if !report.ok() {
        return Err(GenomeError::Invalid(report.violations.join("; ")));
    }
    Ok(genome)
}

/// Hex SHA-256 of the canonical serialization.
pub fn genome_hash(genome: &Genome) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serialize_genome(genome).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
