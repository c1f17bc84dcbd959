use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cmaff::cmaff::{fuse_with_attention, load_bundle, save_bundle, Arrangement, CmaffParams};
use cmaff::ften::{read_feature_map, write_channel_vector, write_feature_map};
use cmaff::pnm::Image;
use cmaff::tensor::ChannelVector;

use crate::output::Outputs;

#[derive(clap::Args)]
pub struct Args {
    /// RGB feature map (.ften, C×H×W)
    rgb: PathBuf,
    /// Thermal feature map (.ften, C×H×W)
    ir: PathBuf,
    /// Parameter bundle manifest
    #[arg(long, conflicts_with = "seed")]
    params: Option<PathBuf>,
    /// Seed for freshly initialized parameters
    #[arg(long, env = "CMAFF_SEED")]
    seed: Option<u64>,
    /// DEM bottleneck ratio for fresh parameters
    #[arg(long, default_value_t = cmaff::cmaff::DEFAULT_DEM_RATIO)]
    r_dem: usize,
    #[arg(long, default_value = "parallel")]
    arrangement: Arrangement,
    /// Fused output (.ften)
    #[arg(long)]
    out: PathBuf,
    /// Directory for attention vectors (.ften) and their renders (.pgm)
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Directory to save the parameters used
    #[arg(long)]
    save_params: Option<PathBuf>,
}

fn render(v: &ChannelVector<f32>) -> Result<Image> {
    // One column per channel, 8 pixels tall.
    let rows: Vec<f32> = (0..8).flat_map(|_| v.data().iter().copied()).collect();
    Ok(Image::from_normalized(&rows, v.len(), 8)?)
}

pub fn run(args: Args) -> Result<ExitCode> {
    let fr = read_feature_map(&args.rgb)?;
    let ft = read_feature_map(&args.ir)?;
    fr.ensure_same_shape(&ft, "rgb/ir feature maps")?;

    let params = match (&args.params, args.seed) {
        (Some(m), _) => load_bundle(m).with_context(|| format!("loading {}", m.display()))?,
        (None, Some(seed)) => CmaffParams::init(
            fr.channels(),
            args.r_dem,
            seed,
            args.arrangement.needs_concat(),
        )?,
        (None, None) => bail!("either --params or --seed (or CMAFF_SEED) is required"),
    };
    if params.channels != fr.channels() {
        bail!(
            "parameters are for {} channels but the inputs have {}",
            params.channels,
            fr.channels()
        );
    }

    let out = fuse_with_attention(&fr, &ft, &params, args.arrangement)?;
    let mut outputs = Outputs::new();
    outputs.write_with(&args.out, |p| write_feature_map(p, &out.fused))?;

    if let Some(dir) = &args.viz {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, v) in [
            ("m_dm", &out.dem_mask),
            ("m_r", &out.csm_rgb),
            ("m_t", &out.csm_ir),
        ] {
            outputs.write_with(&dir.join(format!("{name}.ften")), |p| {
                write_channel_vector(p, v)
            })?;
            let img = render(v)?;
            outputs.write_with(&dir.join(format!("{name}.pgm")), |p| img.write(p))?;
        }
    }
    if let Some(dir) = &args.save_params {
        let paths = save_bundle(&params, dir)
            .with_context(|| format!("saving parameters to {}", dir.display()))?;
        outputs.track(paths);
    }

    let (c, h, w) = out.fused.shape();
    println!("fuse.arrangement={}", args.arrangement);
    println!("fuse.shape={c}x{h}x{w}");
    println!("fuse.params={}", params.num_parameters());
    println!("fuse.out={}", args.out.display());
    outputs.commit();
    Ok(ExitCode::SUCCESS)
}
