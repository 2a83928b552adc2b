//! Training, fitness evaluation and ensembling.
//!
//! Networks train with plain momentum SGD on softmax cross-entropy; there
//! are no normalization layers, so gradients stay exactly checkable and a
//! fixed seed reproduces runs bit for bit. Fitness is validation accuracy
//! after a short training budget, or a surrogate similarity score when no
//! training is wanted.

mod dataset;
mod network;
mod surrogate;

pub use dataset::{generate_toy_dataset, Split, ToyDataset, ToyVideoSpec};
pub use network::{
    build_network, network_matches_genome_count, LayerNode, LinearHead, ModuleBlock, Network,
    RepeatBlock, Trace,
};
pub use surrogate::{
    default_surrogate_landscape, surrogate_fitness, SurrogateLandscape,
    DEFAULT_SURROGATE_TARGET_SEED,
};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::genome::{genome_hash, Genome, GenomeError};
use crate::kernels::{read_layer_dump, write_layer_dump, KernelError, Tensor};
use crate::rng::{derive_rng, derive_seed};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("training diverged at iteration {iteration} (loss went non-finite)")]
    Diverged { iteration: usize, history: Vec<HistoryRow> },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

/// SGD settings for one fitness evaluation or full training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Validation accuracy is measured every this many iterations and at
    /// the final iteration.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Batch and learning rate from the desk-scale calibration sweep:
        // larger batches are what make the sparse toy signal trainable.
        TrainConfig {
            iterations: 1000,
            batch_size: 16,
            learning_rate: 0.02,
            momentum: 0.9,
            seed: 0,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.iterations == 0 {
            return Err(TrainerError::Config("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainerError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainerError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainerError::Config("momentum must be in [0, 1)".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainerError::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fitness of an architecture: held-out validation accuracy in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub value: f64,
    pub evaluated_at: usize,
    #[serde(skip, default)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub genome: Genome,
    pub config: TrainConfig,
    pub final_train_loss: f64,
    pub val_accuracy: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    probs
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of examples whose argmax logit matches the label.
pub fn evaluate_accuracy(network: &Network, split: &Split) -> Result<f64, TrainerError> {
    if split.videos.is_empty() {
        return Err(TrainerError::Config("empty evaluation split".into()));
    }
    let mut correct = 0usize;
    for (video, &label) in split.videos.iter().zip(&split.labels) {
        if argmax(&network.forward(video)?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.videos.len() as f64)
}

/// Momentum SGD on softmax cross-entropy. Single-threaded parameter
/// updates with a fixed batch reduction order; deterministic given seeds.
pub fn train(
    mut network: Network,
    dataset: &ToyDataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, Vec<HistoryRow>), TrainerError> {
    config.validate()?;
    if dataset.train.videos.is_empty() {
        return Err(TrainerError::Config("empty training split".into()));
    }
    let mut rng = derive_rng(config.seed, "train-batches", 0);
    let mut params = network.slot_params();
    let mut velocity: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut history: Vec<HistoryRow> = Vec::with_capacity(config.iterations);
    let n = dataset.train.videos.len();
    // Batches sample with replacement; a batch size covering the whole
    // split degenerates to deterministic full-batch gradient descent.
    let b = config.batch_size.min(n);
    let full_batch = config.batch_size >= n;

    for iter in 1..=config.iterations {
        let mut batch_grads: Option<Vec<Vec<f64>>> = None;
        let mut loss = 0.0;
        // Exploding updates surface either as a non-finite loss or, one
        // iteration later, as non-finite parameters inside a forward pass;
        // both count as divergence.
        let diverged = |iter, history: &[HistoryRow]| TrainerError::Diverged {
            iteration: iter,
            history: history.to_vec(),
        };
        for slot in 0..b {
            let idx = if full_batch { slot } else { rng.gen_range(0..n) };
            let video = &dataset.train.videos[idx];
            let label = dataset.train.labels[idx];
            let (logits, trace) = match network.forward_traced(video) {
                Ok(ok) => ok,
                Err(TrainerError::Kernel(KernelError::NonFinite(_))) => {
                    return Err(diverged(iter, &history))
                }
                Err(e) => return Err(e),
            };
            let probs = softmax(&logits);
            loss += -(probs[label].max(1e-300)).ln() / b as f64;
            let mut dlogits = probs;
            dlogits[label] -= 1.0;
            for d in &mut dlogits {
                *d /= b as f64;
            }
            let grads = match network.backward(&trace, &dlogits) {
                Ok(g) => g,
                Err(TrainerError::Kernel(KernelError::NonFinite(_))) => {
                    return Err(diverged(iter, &history))
                }
                Err(e) => return Err(e),
            };
            match &mut batch_grads {
                None => batch_grads = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
        }

        if !loss.is_finite() {
            return Err(TrainerError::Diverged { iteration: iter, history });
        }

        let grads = batch_grads.expect("batch size >= 1");
        for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grads) {
            for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = config.momentum * *vi + gi;
                *pi -= config.learning_rate * *vi;
            }
        }
        network.load_slot_params(&params)?;

        let val_accuracy = if iter % config.eval_every == 0 || iter == config.iterations {
            match evaluate_accuracy(&network, &dataset.val) {
                Ok(acc) => Some(acc),
                Err(TrainerError::Kernel(KernelError::NonFinite(_))) => {
                    return Err(diverged(iter, &history))
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        history.push(HistoryRow { iteration: iter, loss, val_accuracy });
    }

    let final_train_loss = history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    let val_accuracy = history
        .iter()
        .rev()
        .find_map(|r| r.val_accuracy)
        .expect("final iteration always evaluates");
    let model = TrainedModel {
        network,
        genome: Genome {
            // Placeholder; fitness_train and the CLI overwrite this with the
            // real source genome. Training itself never reads it.
            meta: crate::genome::MetaKind::Toy,
            channel_scale: 1.0,
            stem: Vec::new(),
            modules: Vec::new(),
        },
        config: config.clone(),
        final_train_loss,
        val_accuracy,
    };
    Ok((model, history))
}

/// Build, train, and score a genome: the fitness is the final validation
/// accuracy. A diverged run scores 0 rather than failing the search.
pub fn fitness_train(
    genome: &Genome,
    dataset: &ToyDataset,
    config: &TrainConfig,
) -> Result<Fitness, TrainerError> {
    let started = Instant::now();
    let input_channels = dataset
        .train
        .videos
        .first()
        .map(|v| v.shape()[3])
        .ok_or_else(|| TrainerError::Config("empty training split".into()))?;
    let network = build_network(
        genome,
        dataset.num_classes,
        input_channels,
        derive_seed(config.seed, "net-init", 0),
    )?;
    match train(network, dataset, config) {
        Ok((model, _)) => Ok(Fitness {
            value: model.val_accuracy,
            evaluated_at: config.iterations,
            wall_time: started.elapsed(),
        }),
        Err(TrainerError::Diverged { iteration, .. }) => Ok(Fitness {
            value: 0.0,
            evaluated_at: iteration,
            wall_time: started.elapsed(),
        }),
        Err(other) => Err(other),
    }
}

/// Train a genome end to end and keep the weights (used by the CLI and the
/// ensemble evaluation).
pub fn train_genome(
    genome: &Genome,
    dataset: &ToyDataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, Vec<HistoryRow>), TrainerError> {
    let input_channels = dataset
        .train
        .videos
        .first()
        .map(|v| v.shape()[3])
        .ok_or_else(|| TrainerError::Config("empty training split".into()))?;
    let network = build_network(
        genome,
        dataset.num_classes,
        input_channels,
        derive_seed(config.seed, "net-init", 0),
    )?;
    let (mut model, history) = train(network, dataset, config)?;
    model.genome = genome.clone();
    Ok((model, history))
}

/// Arithmetic mean of per-model softmax probabilities, one row per example.
pub fn ensemble_predict(models: &[&Network], batch: &[Tensor]) -> Result<Tensor, TrainerError> {
    let first = models
        .first()
        .ok_or_else(|| TrainerError::Config("ensemble needs at least one model".into()))?;
    let k = first.num_classes;
    if let Some(bad) = models.iter().find(|m| m.num_classes != k) {
        return Err(TrainerError::Config(format!(
            "ensemble class-count mismatch: {} vs {k}",
            bad.num_classes
        )));
    }
    let mut out = Tensor::zeros(&[batch.len(), k]);
    for (row, video) in batch.iter().enumerate() {
        let mut mean = vec![0.0; k];
        for model in models {
            let probs = softmax(&model.forward(video)?);
            for (m, p) in mean.iter_mut().zip(&probs) {
                *m += p / models.len() as f64;
            }
        }
        out.data_mut()[row * k..(row + 1) * k].copy_from_slice(&mean);
    }
    Ok(out)
}

/// Test accuracy of an ensemble by averaged softmax probabilities.
pub fn ensemble_accuracy(models: &[&Network], split: &Split) -> Result<f64, TrainerError> {
    let probs = ensemble_predict(models, &split.videos)?;
    let k = probs.shape()[1];
    let mut correct = 0usize;
    for (row, &label) in split.labels.iter().enumerate() {
        if argmax(&probs.data()[row * k..(row + 1) * k]) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub genome_hash: String,
    pub genome: Genome,
    pub config: TrainConfig,
    pub iteration: usize,
    pub final_train_loss: f64,
    pub val_accuracy: f64,
    pub num_classes: usize,
    pub input_channels: usize,
}

/// Single-file checkpoint: manifest line, then every layer in dump format
/// in canonical visit order (head last).
pub fn write_checkpoint(path: &Path, model: &TrainedModel) -> Result<(), TrainerError> {
    let manifest = CheckpointManifest {
        genome_hash: genome_hash(&model.genome),
        genome: model.genome.clone(),
        config: model.config.clone(),
        iteration: model.config.iterations,
        final_train_loss: model.final_train_loss,
        val_accuracy: model.val_accuracy,
        num_classes: model.network.num_classes,
        input_channels: model.network.input_channels,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut line = serde_json::to_string(&manifest).expect("manifest serializes");
    line.push('\n');
    w.write_all(line.as_bytes())?;
    let mut io_err = None;
    model.network.visit_layers(|layer_path, layer| {
        if io_err.is_none() {
            if let Err(e) = write_layer_dump(&mut w, &layer_path, layer) {
                io_err = Some(e);
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint by rebuilding the network from the embedded genome and
/// restoring every parameter slot.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointManifest, Network), TrainerError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let manifest: CheckpointManifest = serde_json::from_str(line.trim_end())
        .map_err(|e| TrainerError::Checkpoint(format!("bad manifest: {e}")))?;
    let mut network = build_network(
        &manifest.genome,
        manifest.num_classes,
        manifest.input_channels,
        0,
    )?;
    let mut dumps = Vec::new();
    while let Some(dump) = read_layer_dump(&mut r)? {
        dumps.push(dump);
    }
    let mut expected = Vec::new();
    network.visit_layers(|layer_path, layer| expected.push((layer_path, layer.num_params())));
    if dumps.len() != expected.len() {
        return Err(TrainerError::Checkpoint(format!(
            "checkpoint holds {} layers, network has {}",
            dumps.len(),
            expected.len()
        )));
    }
    let mut slots = Vec::with_capacity(dumps.len());
    for (dump, (layer_path, n)) in dumps.iter().zip(&expected) {
        if dump.path != *layer_path || dump.data.len() != *n {
            return Err(TrainerError::Checkpoint(format!(
                "layer `{}` does not match network slot `{layer_path}`",
                dump.path
            )));
        }
        slots.push(dump.data.clone());
    }
    network.load_slot_params(&slots)?;
    Ok((manifest, network))
}

/// Read every layer dump of a checkpoint without rebuilding the network.
pub fn read_checkpoint_dumps(
    path: &Path,
) -> Result<(CheckpointManifest, Vec<crate::kernels::LayerDump>), TrainerError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let manifest: CheckpointManifest = serde_json::from_str(line.trim_end())
        .map_err(|e| TrainerError::Checkpoint(format!("bad manifest: {e}")))?;
    let mut dumps = Vec::new();
    while let Some(dump) = read_layer_dump(&mut r)? {
        dumps.push(dump);
    }
    Ok((manifest, dumps))
}

/// History CSV: `iteration,loss,val_acc` with the accuracy column empty on
/// iterations where validation was not measured.
pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,loss,val_acc")?;
    for row in history {
        match row.val_accuracy {
            Some(acc) => writeln!(w, "{},{},{}", row.iteration, row.loss, acc)?,
            None => writeln!(w, "{},{},", row.iteration, row.loss)?,
        }
    }
    w.flush()
}
