//! Calibration sweeps behind the frozen defaults: learning-rate grid for
//! the toy training setup, timing of one fitness evaluation, and schedule
//! comparisons on the default surrogate landscape.
//!
//! Run with: cargo run --example calibrate -p evanet-core [lr|surrogate|timing|e2e]

use std::time::Instant;

use evanet_core::evolution::{
    run_evolution, run_random_search, EvolutionConfig, MutationSchedule, SurrogateEvaluator,
    TrainEvaluator,
};
use evanet_core::genome::{sample_random_genome, MetaKind, SearchConstraints};
use evanet_core::trainer::{
    default_surrogate_landscape, fitness_train, generate_toy_dataset, ToyVideoSpec, TrainConfig,
};

fn fitness_video_spec(seed: u64) -> ToyVideoSpec {
    ToyVideoSpec {
        frames: 8,
        height: 12,
        width: 12,
        channels: 1,
        num_classes: 8,
        train_samples: 256,
        val_samples: 128,
        test_samples: 128,
        seed,
    }
}

fn desk_constraints() -> SearchConstraints {
    SearchConstraints {
        allowed_temporal_lens: [1, 3, 5].into_iter().collect(),
        max_streams: 3,
        max_repeats: 2,
        ..SearchConstraints::default()
    }
}

fn sweep_lr() {
    for (h, w) in [(10usize, 10usize), (12, 12)] {
        let spec = ToyVideoSpec { height: h, width: w, ..fitness_video_spec(100) };
        let dataset = generate_toy_dataset(&spec).unwrap();
        for (lr, momentum, batch) in [
            (0.02, 0.9, 8),
            (0.05, 0.9, 8),
            (0.05, 0.95, 8),
            (0.1, 0.9, 8),
            (0.02, 0.9, 16),
            (0.05, 0.9, 16),
        ] {
            let mut accs = Vec::new();
            let started = Instant::now();
            for genome_seed in [0u64, 1, 2, 3, 4] {
                let genome = sample_random_genome(MetaKind::Toy, &desk_constraints(), genome_seed);
                let config = TrainConfig {
                    iterations: 300,
                    batch_size: batch,
                    learning_rate: lr,
                    momentum,
                    seed: genome_seed,
                    eval_every: 100,
                };
                let fitness = fitness_train(&genome, &dataset, &config).unwrap();
                accs.push(fitness.value);
            }
            println!(
                "{h}x{w} lr={lr} mom={momentum} batch={batch}: accs={:?} wall={:.1}s",
                accs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                started.elapsed().as_secs_f64()
            );
        }
    }
}

fn timing() {
    let dataset = generate_toy_dataset(&fitness_video_spec(100)).unwrap();
    let mut total = 0.0;
    for genome_seed in 0..8u64 {
        let genome = sample_random_genome(MetaKind::Toy, &desk_constraints(), genome_seed);
        let config = TrainConfig {
            iterations: 300,
            batch_size: 4,
            seed: genome_seed,
            eval_every: 100,
            ..TrainConfig::default()
        };
        let started = Instant::now();
        let f = fitness_train(&genome, &dataset, &config).unwrap();
        let secs = started.elapsed().as_secs_f64();
        total += secs;
        println!("genome={genome_seed} val_acc={:.4} wall={secs:.2}s", f.value);
    }
    println!("mean per evaluation: {:.2}s", total / 8.0);
}

fn surrogate_candidates() -> Vec<(String, evanet_core::trainer::SurrogateLandscape)> {
    use evanet_core::trainer::SurrogateLandscape;
    let mut out = vec![("frozen-default".to_string(), default_surrogate_landscape())];
    for max_streams in [2usize, 3] {
        for seed in [9001u64, 9002, 9003, 9004] {
            let constraints = SearchConstraints {
                max_streams,
                max_repeats: 3,
                ..SearchConstraints::default()
            };
            let target = sample_random_genome(MetaKind::Toy, &constraints, seed);
            out.push((
                format!("streams<={max_streams} repeats<=3 seed={seed}"),
                SurrogateLandscape::new(target),
            ));
        }
    }
    out
}

fn surrogate() {
    for (name, landscape) in surrogate_candidates() {
        println!("=== candidate: {name}");
        surrogate_one(&landscape);
    }
}

fn surrogate_one(landscape: &evanet_core::trainer::SurrogateLandscape) {
    let base_seed: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let landscape = landscape.clone();
    let seeds: Vec<u64> = (base_seed..base_seed + 20).collect();
    let base = |schedule, seed| EvolutionConfig {
        population: 16,
        tournament: 8,
        rounds: 300,
        schedule,
        seed,
        meta: MetaKind::Toy,
        ..EvolutionConfig::default()
    };

    let mut evo_wins = 0;
    let mut reached = 0;
    let mut sums = [0.0f64; 4]; // annealed@300, const1@300, const3@300, spare
    let mut sums50 = [0.0f64; 2]; // const3@50, const1@50
    for &seed in &seeds {
        let annealed = base(MutationSchedule::Annealed { d: 7, r: 25 }, seed);
        let evo = run_evolution(&annealed, &SurrogateEvaluator(landscape.clone())).unwrap();
        let rand = run_random_search(&annealed, &SurrogateEvaluator(landscape.clone())).unwrap();
        let evo_best = evo.trace.last().unwrap().best_fitness;
        let rand_best = rand.trace.last().unwrap().best_fitness;
        if evo_best > rand_best {
            evo_wins += 1;
        }
        if evo_best >= 0.95 {
            reached += 1;
        }
        sums[0] += evo_best;

        let c1 = run_evolution(
            &base(MutationSchedule::Constant { count: 1 }, seed),
            &SurrogateEvaluator(landscape.clone()),
        )
        .unwrap();
        let c3 = run_evolution(
            &base(MutationSchedule::Constant { count: 3 }, seed),
            &SurrogateEvaluator(landscape.clone()),
        )
        .unwrap();
        sums[1] += c1.trace.last().unwrap().best_fitness;
        sums[2] += c3.trace.last().unwrap().best_fitness;
        sums50[0] += c3.trace[49].best_fitness;
        sums50[1] += c1.trace[49].best_fitness;
    }
    let n = seeds.len() as f64;
    println!("evolution beats random: {evo_wins}/20 (need >= 16)");
    println!("evolution reaches 0.95: {reached}/20 (need >= 16)");
    println!(
        "means@300: annealed={:.4} const1={:.4} const3={:.4} (need annealed >= both)",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n
    );
    println!(
        "means@50: const3={:.4} const1={:.4} (need const3 > const1)",
        sums50[0] / n,
        sums50[1] / n
    );
}

fn e2e() {
    // Pre-registered calibration of the end-to-end evolution settings on
    // seeds disjoint from the acceptance set: per seed, run the search,
    // retrain the top 3, and compare ensemble vs best-individual test
    // accuracy.
    use evanet_core::evolution::{individual_eval_seed, top_k};
    use evanet_core::rng::derive_seed;
    use evanet_core::trainer::{ensemble_accuracy, evaluate_accuracy, train_genome};

    let seeds: Vec<u64> = vec![1001, 1002, 1003, 1004, 1005];
    let started = Instant::now();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &seed in &seeds {
            handles.push(scope.spawn(move || {
                let spec = ToyVideoSpec { height: 10, width: 10, seed, ..fitness_video_spec(seed) };
                let dataset = generate_toy_dataset(&spec).unwrap();
                let config = EvolutionConfig {
                    population: 8,
                    tournament: 4,
                    rounds: 60,
                    schedule: MutationSchedule::Annealed { d: 7, r: 10 },
                    seed,
                    workers: 1,
                    meta: MetaKind::Toy,
                    constraints: desk_constraints(),
                    ..EvolutionConfig::default()
                };
                let train_config = TrainConfig {
                    iterations: 300,
                    batch_size: 16,
                    learning_rate: 0.02,
                    momentum: 0.9,
                    seed,
                    eval_every: 100,
                };
                let evaluator =
                    TrainEvaluator { dataset: dataset.clone(), config: train_config.clone() };
                let result = run_evolution(&config, &evaluator).unwrap();
                let (top, _) = top_k(result.store.history(), 3);
                let mut models = Vec::new();
                let mut test_accs = Vec::new();
                for ind in &top {
                    let retrain = TrainConfig {
                        seed: derive_seed(
                            train_config.seed,
                            "train-eval",
                            individual_eval_seed(config.seed, ind),
                        ),
                        ..train_config.clone()
                    };
                    let (model, _) = train_genome(&ind.genome, &dataset, &retrain).unwrap();
                    test_accs.push(evaluate_accuracy(&model.network, &dataset.test).unwrap());
                    models.push(model);
                }
                let nets: Vec<&evanet_core::trainer::Network> =
                    models.iter().map(|m| &m.network).collect();
                let ens = ensemble_accuracy(&nets, &dataset.test).unwrap();
                (seed, top.iter().map(|i| i.fitness.value).collect::<Vec<_>>(), test_accs, ens)
            }));
        }
        for h in handles {
            let (seed, fits, tests, ens) = h.join().unwrap();
            let best = tests.first().copied().unwrap_or(0.0);
            println!(
                "seed={seed} top3_val={fits:?} top3_test={tests:?} ensemble={ens:.4} (ens>=best: {})",
                ens >= best
            );
        }
    });
    println!("total wall {:.1}s", started.elapsed().as_secs_f64());
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "timing".into());
    match mode.as_str() {
        "lr" => sweep_lr(),
        "surrogate" => surrogate(),
        "timing" => timing(),
        "e2e" => e2e(),
        other => eprintln!("unknown mode `{other}`; use lr|surrogate|timing|e2e"),
    }
}
