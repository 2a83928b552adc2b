//! Surrogate fitness landscape.
//!
//! A deterministic genome-similarity score against a hidden target genome,
//! standing in for trained accuracy when benchmarking search algorithms.
//! The score is a weighted mean of per-attribute agreements: stem temporal
//! lengths, per-module repeat counts and stream counts, and per-stream type,
//! layer kinds and temporal lengths after canonically sorting streams, so
//! the score is invariant under stream permutation and maximal exactly when
//! the genome equals the target up to stream order.

use serde::{Deserialize, Serialize};

use crate::genome::{serialize_genome, Genome, StreamSpec};
use crate::rng::derive_seed;

use super::{Fitness, TrainerError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateLandscape {
    pub target: Genome,
    /// Family weights for (layer kinds, temporal lengths, stream structure,
    /// repeats). Equal weights give a plain attribute mean.
    pub kind_weight: f64,
    pub temporal_weight: f64,
    pub stream_weight: f64,
    pub repeat_weight: f64,
    /// Bounded deterministic noise amplitude; scaled by (1 - score) so the
    /// optimum stays exactly at the target.
    pub noise_amplitude: f64,
    pub noise_seed: u64,
}

/// Graded agreements decay linearly with distance over these spans, so a
/// mismatch always scores strictly below 1 but near misses earn credit;
/// this keeps the landscape hill-climbable for single-mutation refinement.
const TEMPORAL_SPAN: f64 = 12.0;
const STREAM_COUNT_SPAN: f64 = 6.0;
const REPEAT_SPAN: f64 = 6.0;

impl SurrogateLandscape {
    pub fn new(target: Genome) -> SurrogateLandscape {
        SurrogateLandscape {
            target,
            kind_weight: 1.0,
            temporal_weight: 1.0,
            stream_weight: 1.0,
            repeat_weight: 1.0,
            noise_amplitude: 0.0,
            noise_seed: 0,
        }
    }

    pub fn with_noise(mut self, amplitude: f64, seed: u64) -> SurrogateLandscape {
        self.noise_amplitude = amplitude;
        self.noise_seed = seed;
        self
    }
}

/// Seed of the default landscape's hidden target, frozen after schedule
/// calibration sweeps.
pub const DEFAULT_SURROGATE_TARGET_SEED: u64 = 9001;

/// The default benchmark landscape: a compact Toy-meta target (at most two
/// streams and three repeats per module), noise-free. Searches over the
/// full default space against this target converge within a few hundred
/// rounds while still separating search strategies.
pub fn default_surrogate_landscape() -> SurrogateLandscape {
    let constraints = crate::genome::SearchConstraints {
        max_streams: 2,
        max_repeats: 3,
        ..crate::genome::SearchConstraints::default()
    };
    let target = crate::genome::sample_random_genome(
        crate::genome::MetaKind::Toy,
        &constraints,
        DEFAULT_SURROGATE_TARGET_SEED,
    );
    SurrogateLandscape::new(target)
}

fn graded_agreement(a: usize, b: usize, span: f64) -> f64 {
    (1.0 - a.abs_diff(b) as f64 / span).max(0.0)
}

fn temporal_agreement(a: usize, b: usize) -> f64 {
    graded_agreement(a, b, TEMPORAL_SPAN)
}

struct Tally {
    weighted: f64,
    total_weight: f64,
}

impl Tally {
    fn add(&mut self, weight: f64, score: f64) {
        self.weighted += weight * score;
        self.total_weight += weight;
    }
}

fn sorted_streams(streams: &[StreamSpec]) -> Vec<&StreamSpec> {
    let mut v: Vec<&StreamSpec> = streams.iter().collect();
    v.sort_by_key(|s| s.sort_key());
    v
}

fn score_stream(
    landscape: &SurrogateLandscape,
    target: &StreamSpec,
    candidate: Option<&StreamSpec>,
    tally: &mut Tally,
) {
    let type_match = candidate.map(|c| c.stream_type == target.stream_type).unwrap_or(false);
    tally.add(landscape.stream_weight, if type_match { 1.0 } else { 0.0 });
    for (l, layer) in target.layers.iter().enumerate() {
        if !(layer.kind.is_space_time_conv() || layer.kind.is_pool()) {
            continue; // pointwise layers carry no evolvable information
        }
        let counterpart = candidate.and_then(|c| c.layers.get(l));
        let kind_score = counterpart.map(|c| (c.kind == layer.kind) as usize as f64).unwrap_or(0.0);
        tally.add(landscape.kind_weight, kind_score);
        let len_score = counterpart
            .map(|c| temporal_agreement(c.temporal_len, layer.temporal_len))
            .unwrap_or(0.0);
        tally.add(landscape.temporal_weight, len_score);
    }
}

/// Deterministic similarity of a genome to the landscape target, in [0, 1].
pub fn surrogate_fitness(genome: &Genome, landscape: &SurrogateLandscape) -> Result<Fitness, TrainerError> {
    let target = &landscape.target;
    if genome.meta != target.meta {
        return Err(TrainerError::Config(format!(
            "surrogate meta mismatch: genome is {}, target is {}",
            genome.meta, target.meta
        )));
    }
    let mut tally = Tally { weighted: 0.0, total_weight: 0.0 };

    let template = target.meta.template();
    for (i, slot) in template.stem.iter().enumerate() {
        if !slot.temporal_evolvable {
            continue;
        }
        let score = match (target.stem.get(i), genome.stem.get(i)) {
            (Some(t), Some(c)) => temporal_agreement(c.temporal_len, t.temporal_len),
            _ => 0.0,
        };
        tally.add(landscape.temporal_weight, score);
    }

    for (t_module, c_module) in target.modules.iter().zip(&genome.modules) {
        if target.meta.repeats_evolvable() {
            tally.add(
                landscape.repeat_weight,
                graded_agreement(t_module.repeats, c_module.repeats, REPEAT_SPAN),
            );
        }
        tally.add(
            landscape.stream_weight,
            graded_agreement(t_module.streams.len(), c_module.streams.len(), STREAM_COUNT_SPAN),
        );
        let t_streams = sorted_streams(&t_module.streams);
        let c_streams = sorted_streams(&c_module.streams);
        for (i, t_stream) in t_streams.iter().enumerate() {
            score_stream(landscape, t_stream, c_streams.get(i).copied(), &mut tally);
        }
    }

    let base = if tally.total_weight > 0.0 { tally.weighted / tally.total_weight } else { 0.0 };
    let value = if landscape.noise_amplitude > 0.0 {
        let h = derive_seed(landscape.noise_seed, &serialize_genome(genome), 0);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        (base + landscape.noise_amplitude * (u - 0.5) * (1.0 - base)).clamp(0.0, 1.0)
    } else {
        base
    };
    Ok(Fitness { value, evaluated_at: 0, wall_time: std::time::Duration::ZERO })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{
        sample_random_genome, LayerKind, LayerSpec, MetaKind, ModuleSpec, SearchConstraints,
        StreamType,
    };

    fn pointwise() -> LayerSpec {
        LayerSpec { kind: LayerKind::Conv1x1x1, temporal_len: 1, out_channels: 1 }
    }

    fn st_conv(kind: LayerKind, len: usize) -> LayerSpec {
        LayerSpec { kind, temporal_len: len, out_channels: 1 }
    }

    fn t3_stream(k1: LayerKind, l1: usize, k2: LayerKind, l2: usize) -> StreamSpec {
        StreamSpec {
            stream_type: StreamType::T3TwoSTConv,
            layers: vec![pointwise(), st_conv(k1, l1), st_conv(k2, l2)],
        }
    }

    /// A Toy genome with exactly 20 scored attributes: 1 stem temporal,
    /// 2 x (repeats + stream count), and 3 T3 streams at 5 attributes each.
    fn twenty_attribute_target() -> Genome {
        let mut m1 = ModuleSpec {
            repeats: 2,
            total_out_channels: 8,
            streams: vec![
                t3_stream(LayerKind::Conv3D, 3, LayerKind::ConvITGM, 7),
                t3_stream(LayerKind::Conv2Plus1D, 5, LayerKind::Conv3D, 9),
            ],
        };
        m1.assign_stream_channels();
        let mut m2 = ModuleSpec {
            repeats: 1,
            total_out_channels: 16,
            streams: vec![t3_stream(LayerKind::ConvITGM, 11, LayerKind::ConvITGM, 3)],
        };
        m2.assign_stream_channels();
        Genome {
            meta: MetaKind::Toy,
            channel_scale: MetaKind::Toy.default_channel_scale(),
            stem: vec![st_conv(LayerKind::Conv3D, 5)],
            modules: vec![m1, m2],
        }
    }

    #[test]
    fn identity_scores_one() {
        let target = twenty_attribute_target();
        let landscape = SurrogateLandscape::new(target.clone());
        let f = surrogate_fitness(&target, &landscape).unwrap();
        assert_eq!(f.value, 1.0);
    }

    #[test]
    fn one_kind_flip_out_of_twenty_scores_095() {
        let target = twenty_attribute_target();
        let landscape = SurrogateLandscape::new(target.clone());
        let mut candidate = target.clone();
        candidate.modules[1].streams[0].layers[1].kind = LayerKind::Conv3D;
        let f = surrogate_fitness(&candidate, &landscape).unwrap();
        assert!((f.value - 0.95).abs() < 1e-12, "got {}", f.value);
    }

    #[test]
    fn score_invariant_under_stream_permutation() {
        let target = twenty_attribute_target();
        let landscape = SurrogateLandscape::new(target.clone());
        let mut permuted = target.clone();
        permuted.modules[0].streams.reverse();
        permuted.modules[0].assign_stream_channels();
        let f = surrogate_fitness(&permuted, &landscape).unwrap();
        assert_eq!(f.value, 1.0);
    }

    #[test]
    fn meta_mismatch_is_an_error() {
        let target = twenty_attribute_target();
        let landscape = SurrogateLandscape::new(target);
        let other = sample_random_genome(MetaKind::ResNetLike, &SearchConstraints::default(), 0);
        assert!(surrogate_fitness(&other, &landscape).is_err());
    }

    #[test]
    fn only_exact_match_is_maximal() {
        let target = twenty_attribute_target();
        let landscape = SurrogateLandscape::new(target.clone());
        for seed in 0..200 {
            let candidate = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), seed);
            let f = surrogate_fitness(&candidate, &landscape).unwrap().value;
            assert!((0.0..=1.0).contains(&f));
            if (f - 1.0).abs() < 1e-12 {
                // Equality up to stream order.
                let mut sorted_c = candidate.clone();
                let mut sorted_t = target.clone();
                for m in &mut sorted_c.modules {
                    m.streams.sort_by_key(|s| s.sort_key());
                }
                for m in &mut sorted_t.modules {
                    m.streams.sort_by_key(|s| s.sort_key());
                }
                assert_eq!(
                    sorted_c.modules.iter().map(|m| (&m.streams, m.repeats)).collect::<Vec<_>>(),
                    sorted_t.modules.iter().map(|m| (&m.streams, m.repeats)).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn noise_is_bounded_and_preserves_optimum() {
        let target = twenty_attribute_target();
        let clean = SurrogateLandscape::new(target.clone());
        let noisy = SurrogateLandscape::new(target.clone()).with_noise(0.2, 7);
        assert_eq!(surrogate_fitness(&target, &noisy).unwrap().value, 1.0);
        for seed in 0..50 {
            let candidate = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), seed);
            let a = surrogate_fitness(&candidate, &clean).unwrap().value;
            let b = surrogate_fitness(&candidate, &noisy).unwrap().value;
            assert!((a - b).abs() <= 0.1 + 1e-12, "noise exceeded bound: {a} vs {b}");
            let b2 = surrogate_fitness(&candidate, &noisy).unwrap().value;
            assert_eq!(b, b2, "noise must be deterministic");
        }
    }
}
