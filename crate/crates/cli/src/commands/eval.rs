use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cmaff::annotations::CLASS_NAMES;
use cmaff::metrics::{evaluate, parse_detections, parse_ground_truth, EvalConfig, Interpolation};

use crate::output::read_text;

#[derive(clap::Args)]
pub struct Args {
    /// Ground truth: `image class xc yc w h` per line
    gt: PathBuf,
    /// Detections: `image class score xc yc w h` per line
    det: PathBuf,
    #[arg(long, default_value_t = 9)]
    classes: usize,
    /// Use 11-point interpolated AP instead of all-point
    #[arg(long)]
    eleven_point: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

pub fn run(args: Args) -> Result<ExitCode> {
    if args.classes == 0 || args.threads == 0 {
        bail!("--classes and --threads must be at least 1");
    }
    let gts = parse_ground_truth(&read_text(&args.gt)?)
        .with_context(|| format!("parsing {}", args.gt.display()))?;
    let dets = parse_detections(&read_text(&args.det)?)
        .with_context(|| format!("parsing {}", args.det.display()))?;
    if let Some(b) = gts
        .iter()
        .map(|g| g.class_id)
        .chain(dets.iter().map(|d| d.class_id))
        .find(|&c| c >= args.classes)
    {
        bail!("class id {b} out of range for --classes {}", args.classes);
    }

    let mut cfg = EvalConfig::new(args.classes);
    if args.eleven_point {
        cfg.interpolation = Interpolation::ElevenPoint;
    }
    let report = evaluate(&dets, &gts, &cfg, args.threads)?;
    print!("{}", report.key_values());
    eprint!("{}", report.table(&CLASS_NAMES));
    Ok(ExitCode::SUCCESS)
}
