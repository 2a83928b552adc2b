//! Tournament evolution over a fixed-size population.
//!
//! Each round selects the fittest of S randomly sampled members as parent,
//! applies an annealed number of random mutations, evaluates the child, and
//! inserts it while evicting one member to keep the population size at P.
//! Workers run select/mutate/evaluate concurrently; the tournament snapshot
//! and the insert+evict commit are each atomic. Single-worker runs are
//! bitwise deterministic. A budget-matched random-search baseline shares
//! the accounting: exactly one evaluation per round.

pub mod archive;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::genome::{sample_random_genome, serialize_genome, Genome, MetaKind, SearchConstraints};
use crate::mutation::{apply_random_mutations, mutation_count_schedule, MutationLog};
use crate::rng::{derive_rng, derive_seed};
use crate::trainer::{
    fitness_train, surrogate_fitness, Fitness, SurrogateLandscape, ToyDataset, TrainConfig,
    TrainerError,
};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("mutation retries exhausted at round {0} (degenerate constraints)")]
    RoundRetries(usize),
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive format: {0}")]
    Archive(String),
}

/// One evaluated architecture in the run history.
#[derive(Debug, Clone)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub fitness: Fitness,
    pub parent_id: Option<u64>,
    /// Round index the individual was created in; -1 for initial members.
    pub birth_round: i64,
    pub mutation_log: MutationLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalPolicy {
    LeastFit,
    Oldest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationSchedule {
    /// max(ceil(d - i/r), 1) mutations at round i.
    Annealed { d: usize, r: usize },
    /// The same count every round.
    Constant { count: usize },
}

impl MutationSchedule {
    pub fn count_at(&self, round: usize) -> usize {
        match *self {
            MutationSchedule::Annealed { d, r } => mutation_count_schedule(round, d, r),
            MutationSchedule::Constant { count } => count.max(1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Population size P.
    pub population: usize,
    /// Tournament size S, with 1 < S <= P.
    pub tournament: usize,
    pub rounds: usize,
    pub schedule: MutationSchedule,
    pub removal: RemovalPolicy,
    pub seed: u64,
    pub workers: usize,
    pub meta: MetaKind,
    pub constraints: SearchConstraints,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population: 50,
            tournament: 25,
            rounds: 2000,
            schedule: MutationSchedule::Annealed { d: 7, r: 100 },
            removal: RemovalPolicy::LeastFit,
            seed: 0,
            workers: 1,
            meta: MetaKind::InceptionLike,
            constraints: SearchConstraints::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.population < 2 {
            return Err(EvolutionError::Config("population must be at least 2".into()));
        }
        if !(1 < self.tournament && self.tournament <= self.population) {
            return Err(EvolutionError::Config(format!(
                "tournament size must satisfy 1 < S <= P, got S={} P={}",
                self.tournament, self.population
            )));
        }
        if self.workers == 0 {
            return Err(EvolutionError::Config("workers must be at least 1".into()));
        }
        if let MutationSchedule::Annealed { d, r } = self.schedule {
            if d == 0 || r == 0 {
                return Err(EvolutionError::Config("annealed schedule needs d >= 1 and r >= 1".into()));
            }
        }
        self.constraints
            .validate()
            .map_err(|e| EvolutionError::Config(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Evaluators
// ---------------------------------------------------------------------------

/// Fitness backends. Evaluation failures are recorded as fitness 0 by the
/// runner rather than aborting the search.
pub trait FitnessEvaluator: Sync {
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> Result<Fitness, TrainerError>;
}

pub struct SurrogateEvaluator(pub SurrogateLandscape);

impl FitnessEvaluator for SurrogateEvaluator {
    fn evaluate(&self, genome: &Genome, _eval_seed: u64) -> Result<Fitness, TrainerError> {
        surrogate_fitness(genome, &self.0)
    }
}

pub struct TrainEvaluator {
    pub dataset: ToyDataset,
    pub config: TrainConfig,
}

impl FitnessEvaluator for TrainEvaluator {
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> Result<Fitness, TrainerError> {
        let config = TrainConfig {
            seed: derive_seed(self.config.seed, "train-eval", eval_seed),
            ..self.config.clone()
        };
        fitness_train(genome, &self.dataset, &config)
    }
}

// ---------------------------------------------------------------------------
// Population store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PopulationStore {
    capacity: usize,
    removal: RemovalPolicy,
    history: Vec<Individual>,
    members: Vec<u64>,
    round: usize,
}

impl PopulationStore {
    pub fn new(capacity: usize, removal: RemovalPolicy) -> PopulationStore {
        PopulationStore { capacity, removal, history: Vec::new(), members: Vec::new(), round: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn removal(&self) -> RemovalPolicy {
        self.removal
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    /// Every individual ever created, in commit order; ids index this list.
    pub fn history(&self) -> &[Individual] {
        &self.history
    }

    pub fn individual(&self, id: u64) -> &Individual {
        &self.history[id as usize]
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Replay hook used by archive reconstruction.
    pub(crate) fn replay_initial(&mut self, genome: Genome, fitness: Fitness) {
        self.push_initial(genome, fitness);
    }

    fn push_initial(&mut self, genome: Genome, fitness: Fitness) -> u64 {
        debug_assert!(self.members.len() < self.capacity);
        let id = self.history.len() as u64;
        self.history.push(Individual {
            id,
            genome,
            fitness,
            parent_id: None,
            birth_round: -1,
            mutation_log: Vec::new(),
        });
        self.members.push(id);
        id
    }

    /// Atomic insert+evict: adds the child and removes one member per the
    /// removal policy, restoring the population size.
    pub fn commit_child(
        &mut self,
        genome: Genome,
        fitness: Fitness,
        parent_id: Option<u64>,
        birth_round: i64,
        mutation_log: MutationLog,
    ) -> (u64, u64) {
        let id = self.history.len() as u64;
        self.history.push(Individual { id, genome, fitness, parent_id, birth_round, mutation_log });
        self.members.push(id);
        let evicted = self.pick_eviction();
        self.members.retain(|&m| m != evicted);
        self.round += 1;
        (id, evicted)
    }

    fn pick_eviction(&self) -> u64 {
        match self.removal {
            // Least fit, ties broken by the smallest id.
            RemovalPolicy::LeastFit => self
                .members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let fa = self.individual(a).fitness.value;
                    let fb = self.individual(b).fitness.value;
                    fa.total_cmp(&fb).then(a.cmp(&b))
                })
                .expect("non-empty population"),
            RemovalPolicy::Oldest => {
                self.members.iter().copied().min().expect("non-empty population")
            }
        }
    }

    pub fn best_member(&self) -> &Individual {
        let id = self
            .members
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let fa = self.individual(a).fitness.value;
                let fb = self.individual(b).fitness.value;
                fa.total_cmp(&fb).then(a.cmp(&b))
            })
            .expect("non-empty population");
        self.individual(id)
    }

    pub fn mean_fitness(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|&m| self.individual(m).fitness.value).sum::<f64>()
            / self.members.len() as f64
    }

    /// Rebuild a store from an archived history by replaying inserts and
    /// evictions in commit order.
    pub fn rebuild(
        capacity: usize,
        removal: RemovalPolicy,
        history: Vec<Individual>,
    ) -> Result<PopulationStore, EvolutionError> {
        let mut store = PopulationStore::new(capacity, removal);
        for ind in history {
            if (ind.id as usize) != store.history.len() {
                return Err(EvolutionError::Archive(format!(
                    "non-contiguous id {} at position {}",
                    ind.id,
                    store.history.len()
                )));
            }
            if store.history.len() < capacity {
                store.history.push(ind);
                let id = store.history.last().unwrap().id;
                store.members.push(id);
            } else {
                let Individual { genome, fitness, parent_id, birth_round, mutation_log, .. } = ind;
                store.commit_child(genome, fitness, parent_id, birth_round, mutation_log);
            }
        }
        Ok(store)
    }
}

/// Sample S distinct members uniformly and return the fittest, ties broken
/// by the larger id (youth).
pub fn tournament_select<'s>(
    store: &'s PopulationStore,
    tournament: usize,
    rng: &mut ChaCha8Rng,
) -> Result<&'s Individual, EvolutionError> {
    let n = store.members().len();
    if !(1 < tournament && tournament <= n) {
        return Err(EvolutionError::Config(format!(
            "tournament size {tournament} out of range for population {n}"
        )));
    }
    let mut ids: Vec<u64> = store.members().to_vec();
    ids.sort_unstable();
    let sample: Vec<u64> = ids.choose_multiple(rng, tournament).copied().collect();
    let winner = sample
        .into_iter()
        .max_by(|&a, &b| {
            let fa = store.individual(a).fitness.value;
            let fb = store.individual(b).fitness.value;
            fa.total_cmp(&fb).then(a.cmp(&b))
        })
        .expect("tournament sample non-empty");
    Ok(store.individual(winner))
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub evaluations: usize,
}

#[derive(Debug)]
pub struct EvolutionResult {
    pub store: PopulationStore,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundResult {
    pub child_id: u64,
    pub evicted_id: u64,
}

fn evaluate_or_zero(
    evaluator: &dyn FitnessEvaluator,
    genome: &Genome,
    eval_seed: u64,
) -> Fitness {
    match evaluator.evaluate(genome, eval_seed) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("fitness evaluation failed, recording 0: {e}");
            Fitness { value: 0.0, evaluated_at: 0, wall_time: std::time::Duration::ZERO }
        }
    }
}

const ROUND_RETRIES: usize = 10;

/// Produce a child genome for round `i`: tournament parent plus scheduled
/// mutations, retrying with a fresh rng stream when mutation resampling is
/// exhausted.
fn make_child(
    store: &PopulationStore,
    config: &EvolutionConfig,
    round: usize,
) -> Result<(Genome, Option<u64>, MutationLog), EvolutionError> {
    let count = config.schedule.count_at(round);
    for attempt in 0..ROUND_RETRIES {
        let mut rng = derive_rng(
            config.seed,
            "round",
            (round as u64) * ROUND_RETRIES as u64 + attempt as u64,
        );
        let parent = tournament_select(store, config.tournament, &mut rng)?;
        match apply_random_mutations(&parent.genome, count, &config.constraints, &mut rng) {
            Ok((child, log)) => return Ok((child, Some(parent.id), log)),
            Err(e) => {
                log::warn!("round {round} attempt {attempt}: mutation failed ({e}), retrying");
            }
        }
    }
    Err(EvolutionError::RoundRetries(round))
}

/// One sequential evolution round: select, mutate, evaluate, insert, evict.
pub fn evolution_round(
    store: &mut PopulationStore,
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
) -> Result<RoundResult, EvolutionError> {
    let round = store.round();
    let (child, parent_id, log) = make_child(store, config, round)?;
    let fitness = evaluate_or_zero(evaluator, &child, derive_seed(config.seed, "eval", round as u64));
    let (child_id, evicted_id) = store.commit_child(child, fitness, parent_id, round as i64, log);
    Ok(RoundResult { child_id, evicted_id })
}

enum SearchMode {
    Evolution,
    RandomSearch,
}

type Sink<'a> = dyn FnMut(&Individual) -> std::io::Result<()> + Send + 'a;

fn init_members(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
    store: &mut PopulationStore,
    sink: &mut Sink<'_>,
) -> Result<(), EvolutionError> {
    let start = store.history().len();
    for k in start..config.population {
        let genome =
            sample_random_genome(config.meta, &config.constraints, derive_seed(config.seed, "init", k as u64));
        let fitness =
            evaluate_or_zero(evaluator, &genome, derive_seed(config.seed, "init-eval", k as u64));
        let id = store.push_initial(genome, fitness);
        sink(store.individual(id))?;
    }
    Ok(())
}

fn random_child(config: &EvolutionConfig, round: usize) -> Genome {
    sample_random_genome(
        config.meta,
        &config.constraints,
        derive_seed(config.seed, "random-round", round as u64),
    )
}

fn run_search(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
    mode: SearchMode,
    existing: Vec<Individual>,
    sink: &mut Sink<'_>,
) -> Result<EvolutionResult, EvolutionError> {
    config.validate()?;
    let mut store = PopulationStore::rebuild(config.population, config.removal, existing)?;
    if store.history().len() < config.population {
        init_members(config, evaluator, &mut store, sink)?;
    }
    let mut trace = archive::trace_from_store(&store);

    let remaining_start = store.round();
    if config.workers <= 1 {
        for _ in remaining_start..config.rounds {
            let round = store.round();
            let result = match mode {
                SearchMode::Evolution => evolution_round(&mut store, config, evaluator)?,
                SearchMode::RandomSearch => {
                    let child = random_child(config, round);
                    let fitness = evaluate_or_zero(
                        evaluator,
                        &child,
                        derive_seed(config.seed, "eval", round as u64),
                    );
                    let (child_id, evicted_id) =
                        store.commit_child(child, fitness, None, round as i64, Vec::new());
                    RoundResult { child_id, evicted_id }
                }
            };
            sink(store.individual(result.child_id))?;
            trace.push(TraceRow {
                round: store.round(),
                best_fitness: store.best_member().fitness.value,
                mean_fitness: store.mean_fitness(),
                evaluations: config.population + store.round(),
            });
        }
        return Ok(EvolutionResult { store, trace });
    }

    // Multi-worker: claim round indices atomically; tournament snapshots and
    // insert+evict commits serialize on the store lock while evaluation runs
    // outside it.
    struct Shared<'a> {
        store: PopulationStore,
        trace: Vec<TraceRow>,
        sink: &'a mut Sink<'a>,
        population: usize,
        error: Option<EvolutionError>,
    }
    let shared = Mutex::new(Shared {
        store,
        trace,
        sink,
        population: config.population,
        error: None,
    });
    let claim = AtomicUsize::new(remaining_start);

    std::thread::scope(|scope| {
        for _ in 0..config.workers {
            scope.spawn(|| loop {
                let round = claim.fetch_add(1, Ordering::SeqCst);
                if round >= config.rounds {
                    return;
                }
                let child = match mode {
                    SearchMode::Evolution => {
                        let guard = shared.lock().expect("store lock");
                        if guard.error.is_some() {
                            return;
                        }
                        match make_child(&guard.store, config, round) {
                            Ok(c) => c,
                            Err(e) => {
                                drop(guard);
                                shared.lock().expect("store lock").error.get_or_insert(e);
                                return;
                            }
                        }
                    }
                    SearchMode::RandomSearch => (random_child(config, round), None, Vec::new()),
                };
                let (genome, parent_id, log) = child;
                let fitness = evaluate_or_zero(
                    evaluator,
                    &genome,
                    derive_seed(config.seed, "eval", round as u64),
                );
                let mut guard = shared.lock().expect("store lock");
                if guard.error.is_some() {
                    return;
                }
                let (child_id, _) =
                    guard.store.commit_child(genome, fitness, parent_id, round as i64, log);
                let row = TraceRow {
                    round: guard.store.round(),
                    best_fitness: guard.store.best_member().fitness.value,
                    mean_fitness: guard.store.mean_fitness(),
                    evaluations: guard.population + guard.store.round(),
                };
                guard.trace.push(row);
                let ind = guard.store.individual(child_id).clone();
                if let Err(e) = (guard.sink)(&ind) {
                    guard.error.get_or_insert(EvolutionError::Io(e));
                    return;
                }
            });
        }
    });

    let shared = shared.into_inner().expect("store lock");
    if let Some(e) = shared.error {
        return Err(e);
    }
    Ok(EvolutionResult { store: shared.store, trace: shared.trace })
}

/// Run the evolutionary search: tournament selection, scheduled mutation,
/// and insert-and-evict rounds over a fixed-size population.
pub fn run_evolution(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
) -> Result<EvolutionResult, EvolutionError> {
    let mut sink = |_: &Individual| Ok(());
    run_search(config, evaluator, SearchMode::Evolution, Vec::new(), &mut sink)
}

/// Run evolution with resume support and a per-individual sink, used by the
/// CLI for append-only archives.
pub fn run_evolution_resumable(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
    existing: Vec<Individual>,
    sink: &mut Sink<'_>,
) -> Result<EvolutionResult, EvolutionError> {
    run_search(config, evaluator, SearchMode::Evolution, existing, sink)
}

/// Random-search baseline with identical budget accounting: each round
/// samples a fresh genome, evaluates it, inserts, and evicts.
pub fn run_random_search(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
) -> Result<EvolutionResult, EvolutionError> {
    let mut sink = |_: &Individual| Ok(());
    run_search(config, evaluator, SearchMode::RandomSearch, Vec::new(), &mut sink)
}

pub fn run_random_search_resumable(
    config: &EvolutionConfig,
    evaluator: &dyn FitnessEvaluator,
    existing: Vec<Individual>,
    sink: &mut Sink<'_>,
) -> Result<EvolutionResult, EvolutionError> {
    run_search(config, evaluator, SearchMode::RandomSearch, existing, sink)
}

/// The evaluation seed an individual was scored with, reproducible from
/// the run seed: initial members derive from their id, children from their
/// birth round. Retraining with this seed reproduces the fitness run.
pub fn individual_eval_seed(run_seed: u64, ind: &Individual) -> u64 {
    if ind.birth_round < 0 {
        derive_seed(run_seed, "init-eval", ind.id)
    } else {
        derive_seed(run_seed, "eval", ind.birth_round as u64)
    }
}

/// The k fittest distinct genomes over the whole history (not just
/// survivors), ties broken by youth; duplicate genomes collapse to their
/// best-scoring entry. The flag is true when fewer than k distinct genomes
/// exist.
pub fn top_k(history: &[Individual], k: usize) -> (Vec<Individual>, bool) {
    assert!(k >= 1, "top_k needs k >= 1");
    let mut best: std::collections::HashMap<String, &Individual> = std::collections::HashMap::new();
    for ind in history {
        let key = serialize_genome(&ind.genome);
        match best.entry(key) {
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(ind);
            }
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let cur = e.get();
                if (ind.fitness.value, ind.id) > (cur.fitness.value, cur.id) {
                    e.insert(ind);
                }
            }
        }
    }
    let mut distinct: Vec<Individual> = best.into_values().cloned().collect();
    distinct.sort_by(|a, b| {
        b.fitness.value.total_cmp(&a.fitness.value).then(b.id.cmp(&a.id))
    });
    let truncated = distinct.len() < k;
    if truncated {
        log::warn!("top_k: only {} distinct genomes for k={k}", distinct.len());
    }
    distinct.truncate(k);
    (distinct, truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::SurrogateLandscape;

    fn surrogate() -> SurrogateEvaluator {
        let target = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), 9999);
        SurrogateEvaluator(SurrogateLandscape::new(target))
    }

    fn small_config(seed: u64, rounds: usize) -> EvolutionConfig {
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
    fn config_validation_enforces_tournament_bounds() {
        let mut config = small_config(0, 10);
        config.tournament = config.population + 1;
        assert!(config.validate().is_err());
        config.tournament = 1;
        assert!(config.validate().is_err());
        config.tournament = 2;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn init_population_has_p_evaluated_members() {
        let config = small_config(1, 0);
        let result = run_evolution(&config, &surrogate()).unwrap();
        assert_eq!(result.store.members().len(), 16);
        assert_eq!(result.store.history().len(), 16);
        assert!(result.store.history().iter().all(|i| (0.0..=1.0).contains(&i.fitness.value)));
        // Zero rounds: result equals the initial population.
        assert_eq!(result.store.round(), 0);
    }

    #[test]
    fn full_tournament_returns_global_best_and_ties_go_young() {
        let config = small_config(2, 0);
        let result = run_evolution(&config, &surrogate()).unwrap();
        let store = result.store;
        let mut rng = derive_rng(0, "tourney-test", 0);
        let best = tournament_select(&store, store.members().len(), &mut rng).unwrap();
        assert_eq!(best.id, store.best_member().id);

        // All-equal fitness: youngest of the sample wins.
        let mut tied = PopulationStore::new(4, RemovalPolicy::LeastFit);
        for k in 0..4 {
            let genome = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), k);
            tied.push_initial(
                genome,
                Fitness { value: 0.5, evaluated_at: 0, wall_time: std::time::Duration::ZERO },
            );
        }
        let winner = tournament_select(&tied, 4, &mut rng).unwrap();
        assert_eq!(winner.id, 3);
    }

    #[test]
    fn round_zero_child_carries_d_mutations() {
        let mut config = small_config(31, 1);
        config.schedule = MutationSchedule::Annealed { d: 7, r: 100 };
        let result = run_evolution(&config, &surrogate()).unwrap();
        let child = result.store.history().last().unwrap();
        assert_eq!(child.birth_round, 0);
        assert_eq!(child.mutation_log.len(), 7);
        assert!(child.parent_id.is_some());
    }

    #[test]
    fn rounds_keep_population_size_and_monotone_best() {
        let config = small_config(3, 120);
        let result = run_evolution(&config, &surrogate()).unwrap();
        assert_eq!(result.store.members().len(), 16);
        assert_eq!(result.store.history().len(), 16 + 120);
        assert_eq!(result.trace.len(), 120);
        let mut prev = f64::NEG_INFINITY;
        for row in &result.trace {
            assert!(row.best_fitness >= prev, "best trace must be non-decreasing");
            prev = row.best_fitness;
        }
        assert_eq!(result.trace.last().unwrap().evaluations, 16 + 120);
    }

    #[test]
    fn lineage_is_a_forest_rooted_at_initial_members() {
        let config = small_config(4, 60);
        let result = run_evolution(&config, &surrogate()).unwrap();
        for ind in result.store.history() {
            match ind.parent_id {
                None => assert!(ind.birth_round == -1 || ind.id >= 16),
                Some(p) => assert!(p < ind.id, "parent {p} must precede child {}", ind.id),
            }
        }
    }

    #[test]
    fn single_worker_runs_are_reproducible() {
        let config = small_config(5, 40);
        let a = run_evolution(&config, &surrogate()).unwrap();
        let b = run_evolution(&config, &surrogate()).unwrap();
        let ser = |r: &EvolutionResult| {
            r.store
                .history()
                .iter()
                .map(|i| (i.id, serialize_genome(&i.genome), i.fitness.value, i.parent_id))
                .collect::<Vec<_>>()
        };
        assert_eq!(ser(&a), ser(&b));
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn multi_worker_keeps_invariants() {
        let mut config = small_config(6, 50);
        config.workers = 2;
        let result = run_evolution(&config, &surrogate()).unwrap();
        assert_eq!(result.store.members().len(), 16);
        assert_eq!(result.store.history().len(), 16 + 50);
        let mut prev = f64::NEG_INFINITY;
        for row in &result.trace {
            assert!(row.best_fitness >= prev);
            prev = row.best_fitness;
        }
    }

    #[test]
    fn random_search_matches_budget_accounting() {
        let config = small_config(7, 30);
        let result = run_random_search(&config, &surrogate()).unwrap();
        assert_eq!(result.store.history().len(), 16 + 30);
        assert_eq!(result.trace.len(), 30);
        assert!(result.store.history()[16..].iter().all(|i| i.parent_id.is_none()));
        let mut prev = f64::NEG_INFINITY;
        for row in &result.trace {
            assert!(row.best_fitness >= prev);
            prev = row.best_fitness;
        }
    }

    #[test]
    fn top_k_dedupes_and_sorts() {
        let config = small_config(8, 40);
        let result = run_evolution(&config, &surrogate()).unwrap();
        let (top, truncated) = top_k(result.store.history(), 3);
        assert!(!truncated);
        assert_eq!(top.len(), 3);
        assert!(top[0].fitness.value >= top[1].fitness.value);
        assert!(top[1].fitness.value >= top[2].fitness.value);
        let keys: std::collections::HashSet<String> =
            top.iter().map(|i| serialize_genome(&i.genome)).collect();
        assert_eq!(keys.len(), 3, "top_k must be distinct");

        // k larger than distinct genomes: returns all, flagged.
        let (all, truncated) = top_k(&result.store.history()[..1], 5);
        assert_eq!(all.len(), 1);
        assert!(truncated);
    }

    #[test]
    fn least_fit_eviction_can_evict_the_child_itself() {
        let mut store = PopulationStore::new(2, RemovalPolicy::LeastFit);
        for k in 0..2 {
            let genome = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), k);
            store.push_initial(
                genome,
                Fitness { value: 0.9, evaluated_at: 0, wall_time: std::time::Duration::ZERO },
            );
        }
        let child = sample_random_genome(MetaKind::Toy, &SearchConstraints::default(), 99);
        let (child_id, evicted) = store.commit_child(
            child,
            Fitness { value: 0.1, evaluated_at: 0, wall_time: std::time::Duration::ZERO },
            Some(0),
            0,
            Vec::new(),
        );
        assert_eq!(child_id, evicted, "lowest-fitness child evicts itself");
        assert_eq!(store.members().len(), 2);
    }
}
