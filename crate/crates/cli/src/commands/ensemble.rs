//! `evanet ensemble`: per-model and softmax-averaged ensemble accuracy on
//! the test split.

use std::path::PathBuf;

use clap::Args;

use evanet_core::trainer::{
    ensemble_accuracy, evaluate_accuracy, generate_toy_dataset, read_checkpoint, Network,
};

use crate::config::load_config;
use crate::CliError;

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Checkpoint files (one or more).
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// Run configuration JSON providing the data section.
    #[arg(long)]
    data_config: PathBuf,
    /// Keep only the K checkpoints with the best stored validation accuracy.
    #[arg(long)]
    top: Option<usize>,
}

pub fn run(args: EnsembleArgs) -> Result<(), CliError> {
    let (config, _) = load_config(&args.data_config)?;
    let spec = config.require_data()?;
    let dataset = generate_toy_dataset(&spec).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut loaded: Vec<(PathBuf, f64, Network)> = Vec::new();
    for path in &args.models {
        let (manifest, network) =
            read_checkpoint(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        loaded.push((path.clone(), manifest.val_accuracy, network));
    }
    if let Some(k) = args.top {
        if k == 0 {
            return Err(CliError::Usage("--top must be at least 1".into()));
        }
        loaded.sort_by(|a, b| b.1.total_cmp(&a.1));
        loaded.truncate(k);
    }

    let classes = loaded[0].2.num_classes;
    if let Some((path, _, bad)) = loaded.iter().find(|(_, _, n)| n.num_classes != classes) {
        return Err(CliError::Usage(format!(
            "class-count mismatch: {} has {} classes, expected {classes}",
            path.display(),
            bad.num_classes
        )));
    }

    for (path, _, network) in &loaded {
        let acc = evaluate_accuracy(network, &dataset.test)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        println!("model {}: test accuracy {:.4}", path.display(), acc);
    }
    let nets: Vec<&Network> = loaded.iter().map(|(_, _, n)| n).collect();
    let acc = ensemble_accuracy(&nets, &dataset.test).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("ensemble of {}: test accuracy {:.4}", nets.len(), acc);
    Ok(())
}
