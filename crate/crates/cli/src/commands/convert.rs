use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cmaff::annotations::{convert_file, DEFAULT_IMAGE_SIZE};

use crate::output::{read_text, Outputs};

#[derive(clap::Args)]
pub struct Args {
    /// VEDAI annotation files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    image_size: u32,
    /// Output file (single input only)
    #[arg(long, conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Output directory; each input keeps its file name
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<ExitCode> {
    if args.out.is_some() && args.inputs.len() != 1 {
        bail!("--out takes exactly one input; use --out-dir for several");
    }
    let mut converted = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = read_text(path)?;
        let labels = convert_file(&text, args.image_size)
            .with_context(|| format!("converting {}", path.display()))?;
        converted.push(labels);
    }

    let mut outputs = Outputs::new();
    match (&args.out, &args.out_dir) {
        (Some(out), _) => outputs.write_bytes(out, converted[0].as_bytes())?,
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (path, labels) in args.inputs.iter().zip(&converted) {
                let name = path
                    .file_name()
                    .with_context(|| format!("{} has no file name", path.display()))?;
                outputs.write_bytes(&dir.join(name), labels.as_bytes())?;
            }
        }
        (None, None) => {
            for labels in &converted {
                print!("{labels}");
            }
        }
    }
    outputs.commit();
    Ok(ExitCode::SUCCESS)
}
