use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cmaff::annotations::{parse_labels, write_labels};
use cmaff::augment::{mosaic_batch, ImagePair, MosaicConfig};
use cmaff::pnm::Image;

use crate::output::{read_text, Outputs};

#[derive(clap::Args)]
pub struct Args {
    /// Tile prefixes P (reads P.ppm, P.pgm and P.txt); four per mosaic
    #[arg(required = true)]
    tiles: Vec<PathBuf>,
    #[arg(long, env = "CMAFF_SEED", default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.ppm, PREFIX.pgm, PREFIX.txt (PREFIX_i.* for several mosaics)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 640)]
    size: usize,
    #[arg(long, default_value_t = 0.25)]
    jitter: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_tile(prefix: &Path) -> Result<ImagePair> {
    let rgb = Image::read(with_ext(prefix, "ppm"))?;
    let ir = Image::read(with_ext(prefix, "pgm"))?;
    let label_path = with_ext(prefix, "txt");
    let labels = if label_path.exists() {
        parse_labels(&read_text(&label_path)?)
            .with_context(|| format!("parsing {}", label_path.display()))?
    } else {
        Vec::new()
    };
    ImagePair::new(rgb, ir, labels).with_context(|| format!("tile {}", prefix.display()))
}

pub fn run(args: Args) -> Result<ExitCode> {
    if !args.tiles.len().is_multiple_of(4) {
        bail!(
            "expected a multiple of four tiles, got {}",
            args.tiles.len()
        );
    }
    if args.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let tiles = args
        .tiles
        .iter()
        .map(|p| load_tile(p))
        .collect::<Result<Vec<_>>>()?;
    let groups: Vec<Vec<ImagePair>> = tiles.chunks(4).map(<[ImagePair]>::to_vec).collect();
    let cfg = MosaicConfig {
        out_size: args.size,
        center_jitter: args.jitter,
        seed: args.seed,
    };
    let mosaics = mosaic_batch(&groups, &cfg, args.threads)?;

    let mut outputs = Outputs::new();
    let single = mosaics.len() == 1;
    for (i, m) in mosaics.iter().enumerate() {
        let prefix = if single {
            args.out.clone()
        } else {
            let mut s = args.out.as_os_str().to_owned();
            s.push(format!("_{i}"));
            PathBuf::from(s)
        };
        outputs.write_with(&with_ext(&prefix, "ppm"), |p| m.rgb.write(p))?;
        outputs.write_with(&with_ext(&prefix, "pgm"), |p| m.ir.write(p))?;
        outputs.write_bytes(
            &with_ext(&prefix, "txt"),
            write_labels(&m.labels).as_bytes(),
        )?;
        println!("mosaic.{i}.prefix={}", prefix.display());
        println!("mosaic.{i}.labels={}", m.labels.len());
    }
    outputs.commit();
    Ok(ExitCode::SUCCESS)
}
