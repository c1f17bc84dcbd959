use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cmaff::annotations::{dataset_stats, parse_labels, render_heatmap, CLASS_NAMES};

use crate::output::{read_text, Outputs};

#[derive(clap::Args)]
pub struct Args {
    /// Label files (`class xc yc w h` per line)
    #[arg(required = true)]
    labels: Vec<PathBuf>,
    #[arg(long, default_value_t = 8)]
    grid_n: usize,
    /// Write the box-center histogram as a PGM heatmap
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Heatmap pixels per histogram bin
    #[arg(long, default_value_t = 16)]
    cell: usize,
}

pub fn run(args: Args) -> Result<ExitCode> {
    if args.cell == 0 {
        bail!("--cell must be at least 1");
    }
    let mut all = Vec::new();
    for path in &args.labels {
        let parsed = parse_labels(&read_text(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        all.extend(parsed);
    }
    let stats = dataset_stats(&all, args.grid_n)?;
    let mut outputs = Outputs::new();
    if let Some(path) = &args.heatmap {
        let img = render_heatmap(&stats.position_hist, stats.grid_n, args.cell);
        outputs.write_with(path, |p| img.write(p))?;
    }
    print!("{}", stats.key_values(&CLASS_NAMES));
    outputs.commit();
    Ok(ExitCode::SUCCESS)
}
