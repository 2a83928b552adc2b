//! Mutation properties at scale: validity closure over random mutation
//! bursts, and constructive reachability of the whole constrained Toy
//! space by breadth-first search over single-mutation edges.

use std::collections::{BTreeSet, HashSet, VecDeque};

use evanet_core::genome::{
    sample_random_genome, serialize_genome, validate, Genome, LayerKind, LayerSpec, MetaKind,
    ModuleSpec, SearchConstraints, StreamSpec, StreamType,
};
use evanet_core::mutation::apply_random_mutations;
use evanet_core::rng::derive_rng;
use rand::Rng;

#[test]
fn ten_thousand_random_mutation_bursts_stay_valid() {
    let constraints = SearchConstraints::default();
    let mut rng = derive_rng(0, "closure", 0);
    for i in 0..10_000u64 {
        let meta = match i % 3 {
            0 => MetaKind::Toy,
            1 => MetaKind::ResNetLike,
            _ => MetaKind::InceptionLike,
        };
        let parent = sample_random_genome(meta, &constraints, i);
        let count = rng.gen_range(1..=7);
        let (child, log) = apply_random_mutations(&parent, count, &constraints, &mut rng)
            .unwrap_or_else(|e| panic!("burst {i}: {e}"));
        assert_eq!(log.len(), count);
        let report = validate(&child);
        assert!(report.ok(), "burst {i}: {:?}", report.violations);
    }
}

// ---------------------------------------------------------------------------
// Reachability on a constrained Toy space
// ---------------------------------------------------------------------------

fn constrained() -> SearchConstraints {
    SearchConstraints {
        allowed_temporal_lens: [1, 3].into_iter().collect::<BTreeSet<_>>(),
        max_streams: 2,
        max_repeats: 2,
        conv_kinds: [LayerKind::Conv3D].into_iter().collect(),
        pool_kinds: [LayerKind::MaxPool].into_iter().collect(),
    }
}

fn pointwise() -> LayerSpec {
    LayerSpec { kind: LayerKind::Conv1x1x1, temporal_len: 1, out_channels: 1 }
}

fn conv(t: usize) -> LayerSpec {
    LayerSpec { kind: LayerKind::Conv3D, temporal_len: t, out_channels: 1 }
}

fn pool(t: usize) -> LayerSpec {
    LayerSpec { kind: LayerKind::MaxPool, temporal_len: t, out_channels: 1 }
}

/// Every stream shape expressible under the constrained vocabulary.
fn all_stream_variants() -> Vec<StreamSpec> {
    let lens = [1usize, 3];
    let mut out = vec![StreamSpec { stream_type: StreamType::T1Only1x1, layers: vec![pointwise()] }];
    for t in lens {
        out.push(StreamSpec {
            stream_type: StreamType::T2OneSTConv,
            layers: vec![pointwise(), conv(t)],
        });
        out.push(StreamSpec {
            stream_type: StreamType::T4PoolThen1x1,
            layers: vec![pool(t), pointwise()],
        });
    }
    for t1 in lens {
        for t2 in lens {
            out.push(StreamSpec {
                stream_type: StreamType::T3TwoSTConv,
                layers: vec![pointwise(), conv(t1), conv(t2)],
            });
        }
    }
    assert_eq!(out.len(), 9);
    out
}

/// Exhaustive enumeration of the constrained Toy space.
fn enumerate_space() -> Vec<Genome> {
    let variants = all_stream_variants();
    let mut module_variants: Vec<(usize, Vec<StreamSpec>)> = Vec::new();
    for repeats in 1..=2usize {
        for a in &variants {
            module_variants.push((repeats, vec![a.clone()]));
            for b in &variants {
                module_variants.push((repeats, vec![a.clone(), b.clone()]));
            }
        }
    }
    assert_eq!(module_variants.len(), 2 * (9 + 81));

    let mut out = Vec::new();
    for stem_t in [1usize, 3] {
        for (r1, s1) in &module_variants {
            for (r2, s2) in &module_variants {
                let mut m1 = ModuleSpec { repeats: *r1, total_out_channels: 8, streams: s1.clone() };
                m1.assign_stream_channels();
                let mut m2 = ModuleSpec { repeats: *r2, total_out_channels: 16, streams: s2.clone() };
                m2.assign_stream_channels();
                let mut stem = conv(stem_t);
                stem.out_channels = 4;
                out.push(Genome {
                    meta: MetaKind::Toy,
                    channel_scale: MetaKind::Toy.default_channel_scale(),
                    stem: vec![stem],
                    modules: vec![m1, m2],
                });
            }
        }
    }
    out
}

/// All genomes one mutation away, mirroring the operator semantics with
/// exhaustive choice enumeration.
fn neighbors(genome: &Genome, constraints: &SearchConstraints) -> Vec<Genome> {
    let mut out = Vec::new();
    let lens: Vec<usize> = constraints.allowed_temporal_lens.iter().copied().collect();

    // Temporal changes: stem conv plus every module conv/pool layer.
    for (i, layer) in genome.stem.iter().enumerate() {
        if layer.kind.is_space_time_conv() {
            for &t in &lens {
                if t != layer.temporal_len {
                    let mut g = genome.clone();
                    g.stem[i].temporal_len = t;
                    out.push(g);
                }
            }
        }
    }
    for (m, module) in genome.modules.iter().enumerate() {
        for (s, stream) in module.streams.iter().enumerate() {
            for (l, layer) in stream.layers.iter().enumerate() {
                if layer.kind.is_space_time_conv() || layer.kind.is_pool() {
                    for &t in &lens {
                        if t != layer.temporal_len {
                            let mut g = genome.clone();
                            g.modules[m].streams[s].layers[l].temporal_len = t;
                            out.push(g);
                        }
                    }
                }
            }
        }
        // Repeat changes.
        for r in 1..=constraints.max_repeats {
            if r != module.repeats {
                let mut g = genome.clone();
                g.modules[m].repeats = r;
                out.push(g);
            }
        }
        // Stream addition (appended, then re-split) and removal.
        if module.streams.len() < constraints.max_streams {
            for variant in all_stream_variants() {
                let mut g = genome.clone();
                g.modules[m].streams.push(variant);
                g.modules[m].assign_stream_channels();
                out.push(g);
            }
        }
        if module.streams.len() > 1 {
            for s in 0..module.streams.len() {
                let mut g = genome.clone();
                g.modules[m].streams.remove(s);
                g.modules[m].assign_stream_channels();
                out.push(g);
            }
        }
    }
    out
}

#[test]
fn bfs_reaches_every_genome_of_the_constrained_toy_space() {
    let constraints = constrained();
    let space: HashSet<String> = enumerate_space().iter().map(serialize_genome).collect();
    assert_eq!(space.len(), 2 * 180 * 180);

    let start = sample_random_genome(MetaKind::Toy, &constraints, 0);
    let start_key = serialize_genome(&start);
    assert!(space.contains(&start_key), "sampled start must live in the enumerated space");

    let mut seen: HashSet<String> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start_key);
    queue.push_back(start);
    while let Some(g) = queue.pop_front() {
        for n in neighbors(&g, &constraints) {
            let key = serialize_genome(&n);
            debug_assert!(space.contains(&key), "neighbor left the space: {key}");
            if seen.insert(key) {
                queue.push_back(n);
            }
        }
    }
    assert_eq!(
        seen.len(),
        space.len(),
        "mutation graph must reach the whole constrained space"
    );
}
