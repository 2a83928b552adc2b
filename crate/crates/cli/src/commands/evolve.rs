//! `evanet evolve` and `evanet random-search`: resumable archive-backed
//! search runs.

use std::path::PathBuf;

use clap::Args;

use evanet_core::evolution::{
    archive, run_evolution_resumable, run_random_search_resumable, EvolutionConfig,
    FitnessEvaluator, SurrogateEvaluator, TrainEvaluator,
};
use evanet_core::trainer::generate_toy_dataset;

use crate::config::{load_config, FitnessKind, RunConfigFile};
use crate::{resolve_workers, CliError};

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Archive directory; holds population.jsonl, trace.csv, config.json.
    #[arg(long)]
    out: PathBuf,
    /// Concurrent evaluation workers (EVANET_WORKERS overrides).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Evolution,
    RandomSearch,
}

fn build_evaluator(
    config: &RunConfigFile,
    evolution: &EvolutionConfig,
) -> Result<Box<dyn FitnessEvaluator>, CliError> {
    match config.fitness.unwrap_or(FitnessKind::Surrogate) {
        FitnessKind::Surrogate => {
            let landscape = config.surrogate_landscape(evolution)?;
            Ok(Box::new(SurrogateEvaluator(landscape)))
        }
        FitnessKind::Train => {
            let train = config.require_train()?;
            let spec = config.require_data()?;
            let dataset =
                generate_toy_dataset(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Box::new(TrainEvaluator { dataset, config: train }))
        }
    }
}

pub fn run(args: EvolveArgs, mode: Mode) -> Result<(), CliError> {
    let (mut config, raw) = load_config(&args.config)?;

    if mode == Mode::RandomSearch {
        // Random search has no mutation phase; an explicit schedule in the
        // config is a contradiction, not something to ignore.
        if raw.get("evolution").and_then(|e| e.get("schedule")).is_some() {
            return Err(CliError::Usage(
                "random-search config must not set evolution.schedule (mutation parameters do not apply)"
                    .into(),
            ));
        }
    }

    let mut evolution = config.evolution_or_default();
    if let Some(seed) = args.seed {
        evolution.seed = seed;
    }
    if let Some(workers) = resolve_workers(args.workers)? {
        evolution.workers = workers;
    }
    evolution.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let evaluator = build_evaluator(&config, &evolution)?;

    // Echo the resolved configuration; a resumed run must match it.
    config.evolution = Some(evolution.clone());
    config.fitness = Some(config.fitness.unwrap_or(FitnessKind::Surrogate));
    config.out_dir = Some(args.out.clone());
    let resolved = serde_json::to_value(&config)
        .map_err(|e| CliError::Usage(format!("cannot serialize resolved config: {e}")))?;

    std::fs::create_dir_all(&args.out)?;
    let config_file = archive::config_path(&args.out);
    if config_file.exists() {
        let on_disk: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&config_file)?)
                .map_err(|e| CliError::Usage(format!("existing config.json is invalid: {e}")))?;
        if on_disk != resolved {
            return Err(CliError::Usage(format!(
                "archive {} was created with a different configuration; refusing to resume",
                args.out.display()
            )));
        }
    } else {
        let mut text = serde_json::to_string_pretty(&resolved)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        text.push('\n');
        std::fs::write(&config_file, text)?;
    }

    let existing = archive::read_population(&args.out).map_err(|e| CliError::Io(e.to_string()))?;
    let total = evolution.population + evolution.rounds;
    if existing.len() >= total {
        // Idempotent completion: refresh the derived trace in case the run
        // was interrupted after the last population commit.
        let trace =
            archive::trace_from_history(evolution.population, evolution.removal, &existing);
        std::fs::write(archive::trace_path(&args.out), archive::format_trace_csv(&trace))?;
        println!(
            "archive {} already holds {} individuals (complete); nothing to do",
            args.out.display(),
            existing.len()
        );
        return Ok(());
    }

    let mut writer =
        archive::ArchiveWriter::open(&args.out).map_err(|e| CliError::Io(e.to_string()))?;
    let mut sink = move |ind: &evanet_core::evolution::Individual| writer.append(ind);
    let result = match mode {
        Mode::Evolution => {
            run_evolution_resumable(&evolution, evaluator.as_ref(), existing, &mut sink)
        }
        Mode::RandomSearch => {
            run_random_search_resumable(&evolution, evaluator.as_ref(), existing, &mut sink)
        }
    }
    .map_err(|e| match e {
        evanet_core::evolution::EvolutionError::Io(io) => CliError::Io(io.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;

    std::fs::write(
        archive::trace_path(&args.out),
        archive::format_trace_csv(&result.trace),
    )?;

    let best = result.store.best_member();
    println!(
        "{} complete: {} evaluations, best fitness {:.4} (individual {})",
        match mode {
            Mode::Evolution => "evolution",
            Mode::RandomSearch => "random search",
        },
        result.store.history().len(),
        best.fitness.value,
        best.id
    );
    Ok(())
}
