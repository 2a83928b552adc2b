//! Run archives.
//!
//! A run directory holds `population.jsonl` (one individual per line, in
//! commit order), `trace.csv` (round, best fitness, mean fitness,
//! evaluations) and `config.json` (the fully resolved run configuration).
//! The population file is append-only with one flushed line per commit, so
//! an interrupted run resumes from the last committed round by replaying
//! the lines.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::genome::Genome;
use crate::mutation::MutationLog;
use crate::trainer::Fitness;

use super::{EvolutionError, EvolutionResult, Individual, PopulationStore, RemovalPolicy, TraceRow};

pub const POPULATION_FILE: &str = "population.jsonl";
pub const TRACE_FILE: &str = "trace.csv";
pub const CONFIG_FILE: &str = "config.json";

pub fn population_path(dir: &Path) -> PathBuf {
    dir.join(POPULATION_FILE)
}

pub fn trace_path(dir: &Path) -> PathBuf {
    dir.join(TRACE_FILE)
}

pub fn config_path(dir: &Path) -> PathBuf {
    dir.join(CONFIG_FILE)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveRecord {
    id: u64,
    parent_id: Option<u64>,
    birth_round: i64,
    fitness: f64,
    genome: Genome,
    mutations: MutationLog,
}

impl From<&Individual> for ArchiveRecord {
    fn from(ind: &Individual) -> ArchiveRecord {
        ArchiveRecord {
            id: ind.id,
            parent_id: ind.parent_id,
            birth_round: ind.birth_round,
            fitness: ind.fitness.value,
            genome: ind.genome.clone(),
            mutations: ind.mutation_log.clone(),
        }
    }
}

impl From<ArchiveRecord> for Individual {
    fn from(rec: ArchiveRecord) -> Individual {
        Individual {
            id: rec.id,
            genome: rec.genome,
            fitness: Fitness {
                value: rec.fitness,
                evaluated_at: 0,
                wall_time: std::time::Duration::ZERO,
            },
            parent_id: rec.parent_id,
            birth_round: rec.birth_round,
            mutation_log: rec.mutations,
        }
    }
}

/// One population line, newline-terminated.
pub fn record_line(ind: &Individual) -> String {
    let mut line = serde_json::to_string(&ArchiveRecord::from(ind)).expect("record serializes");
    line.push('\n');
    line
}

pub fn parse_record(line: &str) -> Result<Individual, EvolutionError> {
    let rec: ArchiveRecord = serde_json::from_str(line)
        .map_err(|e| EvolutionError::Archive(format!("bad population line: {e}")))?;
    Ok(rec.into())
}

/// Append-only population writer; every line is flushed on commit.
pub struct ArchiveWriter {
    file: BufWriter<File>,
}

impl ArchiveWriter {
    pub fn open(dir: &Path) -> std::io::Result<ArchiveWriter> {
        std::fs::create_dir_all(dir)?;
        let file = OpenOptions::new().create(true).append(true).open(population_path(dir))?;
        Ok(ArchiveWriter { file: BufWriter::new(file) })
    }

    pub fn append(&mut self, ind: &Individual) -> std::io::Result<()> {
        self.file.write_all(record_line(ind).as_bytes())?;
        self.file.flush()
    }
}

/// Read every committed individual, in commit order. Missing file reads as
/// an empty history.
pub fn read_population(dir: &Path) -> Result<Vec<Individual>, EvolutionError> {
    let path = population_path(dir);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line)?);
    }
    Ok(out)
}

/// Recompute the per-round trace by replaying a history.
pub fn trace_from_history(
    capacity: usize,
    removal: RemovalPolicy,
    history: &[Individual],
) -> Vec<TraceRow> {
    let mut store = PopulationStore::new(capacity, removal);
    let mut trace = Vec::new();
    for ind in history {
        if store.history().len() < capacity {
            let Individual { genome, fitness, .. } = ind.clone();
            store.replay_initial(genome, fitness);
        } else {
            let Individual { genome, fitness, parent_id, birth_round, mutation_log, .. } =
                ind.clone();
            store.commit_child(genome, fitness, parent_id, birth_round, mutation_log);
            trace.push(TraceRow {
                round: store.round(),
                best_fitness: store.best_member().fitness.value,
                mean_fitness: store.mean_fitness(),
                evaluations: capacity + store.round(),
            });
        }
    }
    trace
}

pub fn trace_from_store(store: &PopulationStore) -> Vec<TraceRow> {
    trace_from_history(store.capacity(), store.removal(), store.history())
}

pub fn format_trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("round,best_fitness,mean_fitness,evaluations\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.round, row.best_fitness, row.mean_fitness, row.evaluations
        ));
    }
    out
}

/// Write the complete archive: population lines, recomputed trace, and the
/// resolved config document when given.
pub fn write_full_archive(
    dir: &Path,
    result: &EvolutionResult,
    config_json: Option<&serde_json::Value>,
) -> Result<(), EvolutionError> {
    std::fs::create_dir_all(dir)?;
    let mut pop = BufWriter::new(File::create(population_path(dir))?);
    for ind in result.store.history() {
        pop.write_all(record_line(ind).as_bytes())?;
    }
    pop.flush()?;
    std::fs::write(trace_path(dir), format_trace_csv(&result.trace))?;
    if let Some(config) = config_json {
        let mut text = serde_json::to_string_pretty(config)
            .map_err(|e| EvolutionError::Archive(e.to_string()))?;
        text.push('\n');
        std::fs::write(config_path(dir), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{
        run_evolution, EvolutionConfig, MutationSchedule, SurrogateEvaluator,
    };
    use crate::genome::{sample_random_genome, MetaKind, SearchConstraints};
    use crate::trainer::SurrogateLandscape;

    fn run(seed: u64, rounds: usize) -> crate::evolution::EvolutionResult {
        let target = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), 77);
        let config = EvolutionConfig {
            population: 8,
            tournament: 4,
            rounds,
            schedule: MutationSchedule::Annealed { d: 7, r: 25 },
            seed,
            meta: MetaKind::Toy,
            ..EvolutionConfig::default()
        };
        run_evolution(&config, &SurrogateEvaluator(SurrogateLandscape::new(target))).unwrap()
    }

    #[test]
    fn population_lines_round_trip() {
        let result = run(1, 12);
        for ind in result.store.history() {
            let parsed = parse_record(record_line(ind).trim_end()).unwrap();
            assert_eq!(parsed.id, ind.id);
            assert_eq!(parsed.parent_id, ind.parent_id);
            assert_eq!(parsed.birth_round, ind.birth_round);
            assert_eq!(parsed.fitness.value, ind.fitness.value);
            assert_eq!(parsed.genome, ind.genome);
            assert_eq!(parsed.mutation_log, ind.mutation_log);
        }
    }

    #[test]
    fn archive_round_trips_through_disk_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let result = run(2, 15);
        write_full_archive(dir.path(), &result, None).unwrap();

        let history = read_population(dir.path()).unwrap();
        assert_eq!(history.len(), result.store.history().len());
        let rebuilt = PopulationStore::rebuild(8, RemovalPolicy::LeastFit, history).unwrap();
        assert_eq!(rebuilt.members(), result.store.members());
        assert_eq!(rebuilt.round(), result.store.round());

        let trace = trace_from_store(&rebuilt);
        assert_eq!(trace, result.trace);
        let on_disk = std::fs::read_to_string(trace_path(dir.path())).unwrap();
        assert_eq!(on_disk, format_trace_csv(&result.trace));
    }
}
