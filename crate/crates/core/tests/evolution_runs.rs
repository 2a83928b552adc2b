//! Search-loop integration: archive byte-identity, resume semantics, and
//! the population invariants on longer runs.

use evanet_core::evolution::{
    archive, run_evolution, run_evolution_resumable, run_random_search, EvolutionConfig,
    MutationSchedule, SurrogateEvaluator,
};
use evanet_core::genome::{sample_random_genome, MetaKind, SearchConstraints};
use evanet_core::trainer::SurrogateLandscape;

fn evaluator() -> SurrogateEvaluator {
    let target = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), 4242);
    SurrogateEvaluator(SurrogateLandscape::new(target))
}

fn config(seed: u64, rounds: usize) -> EvolutionConfig {
    EvolutionConfig {
        population: 16,
        tournament: 8,
        rounds,
        schedule: MutationSchedule::Annealed { d: 7, r: 25 },
        seed,
        meta: MetaKind::Toy,
        ..EvolutionConfig::default()
    }
}

#[test]
fn single_worker_archives_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let result = run_evolution(&config(11, 100), &evaluator()).unwrap();
        archive::write_full_archive(dir, &result, None).unwrap();
    }
    let pop_a = std::fs::read(archive::population_path(dir_a.path())).unwrap();
    let pop_b = std::fs::read(archive::population_path(dir_b.path())).unwrap();
    assert!(!pop_a.is_empty());
    assert_eq!(pop_a, pop_b, "population archives must match byte for byte");
    let trace_a = std::fs::read(archive::trace_path(dir_a.path())).unwrap();
    let trace_b = std::fs::read(archive::trace_path(dir_b.path())).unwrap();
    assert_eq!(trace_a, trace_b, "trace files must match byte for byte");
}

#[test]
fn resumed_run_reproduces_the_uninterrupted_archive() {
    let eval = evaluator();
    let full = run_evolution(&config(13, 60), &eval).unwrap();

    // Stop after 25 rounds, then resume from the written archive.
    let partial = run_evolution(&config(13, 25), &eval).unwrap();
    let dir = tempfile::tempdir().unwrap();
    archive::write_full_archive(dir.path(), &partial, None).unwrap();

    let existing = archive::read_population(dir.path()).unwrap();
    assert_eq!(existing.len(), 16 + 25);
    let mut sink = |_: &evanet_core::evolution::Individual| Ok(());
    let resumed = run_evolution_resumable(&config(13, 60), &eval, existing, &mut sink).unwrap();

    let lines = |r: &evanet_core::evolution::EvolutionResult| {
        r.store.history().iter().map(archive::record_line).collect::<String>()
    };
    assert_eq!(lines(&full), lines(&resumed));
    assert_eq!(full.trace, resumed.trace);
}

#[test]
fn interrupted_initialization_resumes_deterministically() {
    let eval = evaluator();
    let full = run_evolution(&config(17, 10), &eval).unwrap();

    // Simulate a crash after 5 of 16 initial members were committed.
    let existing: Vec<_> = full.store.history()[..5].to_vec();
    let mut sink = |_: &evanet_core::evolution::Individual| Ok(());
    let resumed = run_evolution_resumable(&config(17, 10), &eval, existing, &mut sink).unwrap();
    let lines = |r: &evanet_core::evolution::EvolutionResult| {
        r.store.history().iter().map(archive::record_line).collect::<String>()
    };
    assert_eq!(lines(&full), lines(&resumed));
}

#[test]
fn random_search_and_evolution_archives_share_the_schema() {
    let eval = evaluator();
    let dir = tempfile::tempdir().unwrap();
    let evo = run_evolution(&config(19, 20), &eval).unwrap();
    let rand = run_random_search(&config(19, 20), &eval).unwrap();
    archive::write_full_archive(dir.path(), &rand, None).unwrap();
    let parsed = archive::read_population(dir.path()).unwrap();
    assert_eq!(parsed.len(), rand.store.history().len());
    // Both histories parse with the same record shape.
    for ind in evo.store.history().iter().chain(rand.store.history()) {
        let line = archive::record_line(ind);
        let back = archive::parse_record(line.trim_end()).unwrap();
        assert_eq!(back.genome, ind.genome);
    }
}

#[test]
fn oldest_removal_policy_is_supported() {
    let mut cfg = config(23, 30);
    cfg.removal = evanet_core::evolution::RemovalPolicy::Oldest;
    let result = run_evolution(&cfg, &evaluator()).unwrap();
    assert_eq!(result.store.members().len(), 16);
    // Under oldest-removal the survivors are exactly the newest 16.
    let mut ids: Vec<u64> = result.store.members().to_vec();
    ids.sort_unstable();
    let n = result.store.history().len() as u64;
    assert_eq!(ids, ((n - 16)..n).collect::<Vec<u64>>());
}
