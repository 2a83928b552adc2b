//! `evanet report`: round-indexed fitness CSV plus layer-usage statistics
//! of the top genomes (space-time conv counts by kind with average
//! temporal lengths, repeats expanded).

use std::path::PathBuf;

use clap::Args;

use evanet_core::evolution::{archive, top_k, EvolutionConfig};
use evanet_core::genome::{Genome, LayerKind};

use crate::CliError;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run archive directory (population.jsonl + config.json).
    #[arg(long)]
    archive: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// How many top genomes to summarize.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Default)]
struct KindStats {
    count: usize,
    temporal_sum: usize,
}

impl KindStats {
    fn add(&mut self, temporal_len: usize) {
        self.count += 1;
        self.temporal_sum += temporal_len;
    }

    fn average(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.temporal_sum as f64 / self.count as f64
        }
    }
}

/// Per-kind layer usage of one genome, with module layers counted once per
/// repeat.
fn layer_statistics(genome: &Genome) -> [KindStats; 4] {
    let mut conv3d = KindStats::default();
    let mut conv21d = KindStats::default();
    let mut itgm = KindStats::default();
    let mut pool = KindStats::default();
    let mut visit = |kind: LayerKind, t: usize| match kind {
        LayerKind::Conv3D => conv3d.add(t),
        LayerKind::Conv2Plus1D => conv21d.add(t),
        LayerKind::ConvITGM => itgm.add(t),
        LayerKind::MaxPool | LayerKind::AvgPool => pool.add(t),
        LayerKind::Conv1x1x1 => {}
    };
    for layer in &genome.stem {
        visit(layer.kind, layer.temporal_len);
    }
    for module in &genome.modules {
        for _ in 0..module.repeats {
            for stream in &module.streams {
                for layer in &stream.layers {
                    visit(layer.kind, layer.temporal_len);
                }
            }
        }
    }
    [conv3d, conv21d, itgm, pool]
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    if !args.archive.is_dir() || !archive::population_path(&args.archive).exists() {
        return Err(CliError::Io(format!(
            "{} does not contain a run archive",
            args.archive.display()
        )));
    }
    let config_text = std::fs::read_to_string(archive::config_path(&args.archive))
        .map_err(|e| CliError::Io(format!("missing config.json in archive: {e}")))?;
    let config: crate::RunConfigFile = serde_json::from_str(&config_text)
        .map_err(|e| CliError::Usage(format!("archive config.json: {e}")))?;
    let evolution: EvolutionConfig = config.evolution.unwrap_or_default();

    let history =
        archive::read_population(&args.archive).map_err(|e| CliError::Io(e.to_string()))?;
    if history.is_empty() {
        return Err(CliError::Io("archive population is empty".into()));
    }
    let trace = archive::trace_from_history(evolution.population, evolution.removal, &history);

    let mut out = archive::format_trace_csv(&trace);
    out.push('\n');
    out.push_str(
        "rank,id,fitness,conv3d,conv21d,itgm,avg_t_conv3d,avg_t_conv21d,avg_t_itgm,avg_t_pool\n",
    );
    let (top, _) = top_k(&history, args.top.max(1));
    for (rank, ind) in top.iter().enumerate() {
        let [conv3d, conv21d, itgm, pool] = layer_statistics(&ind.genome);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            ind.id,
            ind.fitness.value,
            conv3d.count,
            conv21d.count,
            itgm.count,
            conv3d.average(),
            conv21d.average(),
            itgm.average(),
            pool.average()
        ));
    }
    std::fs::write(&args.out, out)?;
    println!("report written to {}", args.out.display());
    Ok(())
}
