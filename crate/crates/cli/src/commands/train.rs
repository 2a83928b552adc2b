//! `evanet train`: train one genome end to end, write a checkpoint and the
//! training history, and print the final test accuracy.

use std::path::PathBuf;

use clap::Args;

use evanet_core::genome::parse_genome;
use evanet_core::trainer::{
    evaluate_accuracy, generate_toy_dataset, train_genome, write_checkpoint, write_history_csv,
};

use crate::config::load_config;
use crate::CliError;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Genome JSON document.
    #[arg(long)]
    genome: PathBuf,
    /// Run configuration JSON (train + data sections).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for model.ckpt and history.csv.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let genome_text = std::fs::read_to_string(&args.genome)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", args.genome.display())))?;
    let genome = parse_genome(&genome_text).map_err(|e| CliError::Usage(e.to_string()))?;

    let (config, _) = load_config(&args.config)?;
    let train_config = config.require_train()?;
    let spec = config.require_data()?;
    let dataset = generate_toy_dataset(&spec).map_err(|e| CliError::Usage(e.to_string()))?;

    let (model, history) = train_genome(&genome, &dataset, &train_config).map_err(|e| match e {
        evanet_core::trainer::TrainerError::Io(io) => CliError::Io(io.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;

    std::fs::create_dir_all(&args.out)?;
    let ckpt = args.out.join("model.ckpt");
    write_checkpoint(&ckpt, &model).map_err(|e| CliError::Io(e.to_string()))?;
    write_history_csv(&args.out.join("history.csv"), &history)?;

    let test_accuracy =
        evaluate_accuracy(&model.network, &dataset.test).map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "trained {} iterations: final loss {:.4}, val accuracy {:.4}, test accuracy {:.4}",
        train_config.iterations, model.final_train_loss, model.val_accuracy, test_accuracy
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}
