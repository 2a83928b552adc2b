//! `evanet kernel-inspect`: materialize an iTGM layer's mixture kernel
//! rows (optionally stretched to a longer temporal length) as CSV.

use std::path::PathBuf;

use clap::Args;

use evanet_core::kernels::{build_gaussian_mixture_kernel, stretch_itgm, TGMParams};
use evanet_core::trainer::read_checkpoint_dumps;

use crate::CliError;

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Layer path, e.g. modules.0.repeat.0.stream.1.layer.1
    #[arg(long)]
    layer: PathBuf,
    /// Also print the kernel stretched to this temporal length.
    #[arg(long)]
    stretch: Option<usize>,
}

fn print_kernel(label: &str, params: &TGMParams) -> Result<(), CliError> {
    let kernel = build_gaussian_mixture_kernel(params).map_err(|e| CliError::Usage(e.to_string()))?;
    let l = params.temporal_len;
    let header: Vec<String> = (0..l).map(|i| format!("tap_{i}")).collect();
    println!("# {label} (L={l}, M={})", params.mixtures());
    println!("channel,{}", header.join(","));
    for row in 0..params.out_channels() {
        let taps: Vec<String> =
            kernel.data()[row * l..(row + 1) * l].iter().map(|v| v.to_string()).collect();
        println!("{row},{}", taps.join(","));
    }
    Ok(())
}

pub fn run(args: InspectArgs) -> Result<(), CliError> {
    let layer_path = args.layer.to_string_lossy().to_string();
    let (_, dumps) = read_checkpoint_dumps(&args.checkpoint)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.checkpoint.display())))?;
    let dump = dumps
        .iter()
        .find(|d| d.path == layer_path)
        .ok_or_else(|| CliError::Usage(format!("no layer at path `{layer_path}`")))?;
    if dump.kind != "itgm" {
        return Err(CliError::Usage(format!(
            "layer `{layer_path}` has kind `{}`; kernel-inspect needs an itgm layer",
            dump.kind
        )));
    }
    let params = dump.itgm_params().map_err(|e| CliError::Usage(e.to_string()))?;
    print_kernel("mixture kernel", &params)?;
    if let Some(new_len) = args.stretch {
        let stretched = stretch_itgm(&params, new_len).map_err(|e| CliError::Usage(e.to_string()))?;
        println!();
        print_kernel("stretched", &stretched)?;
    }
    Ok(())
}
