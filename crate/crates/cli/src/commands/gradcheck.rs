use std::process::ExitCode;

use anyhow::{bail, Result};
use cmaff::cmaff::{Arrangement, FuseGradCheck, FUSE_GRAD_TOLERANCE};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 8)]
    channels: usize,
    /// Spatial side (H = W)
    #[arg(long, default_value_t = 5)]
    hw: usize,
    /// Arrangement name or `all`
    #[arg(long, default_value = "all")]
    arrangement: String,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = cmaff::cmaff::DEFAULT_DEM_RATIO)]
    r_dem: usize,
    /// Perturb the analytic gradient (negative control)
    #[arg(long, hide = true)]
    corrupt_adjoint: bool,
}

pub fn run(args: Args) -> Result<ExitCode> {
    if args.channels == 0 || args.hw == 0 || args.r_dem == 0 || args.seeds == 0 {
        bail!("--channels, --hw, --r-dem and --seeds must be at least 1");
    }
    let arrangements: Vec<Arrangement> = if args.arrangement == "all" {
        Arrangement::ALL.to_vec()
    } else {
        vec![args.arrangement.parse()?]
    };
    let check = FuseGradCheck {
        channels: args.channels,
        height: args.hw,
        width: args.hw,
        r_dem: args.r_dem,
        corrupt_adjoint: args.corrupt_adjoint,
        ..FuseGradCheck::default()
    };

    let mut all_pass = true;
    for a in arrangements {
        let mut worst = 0.0f64;
        for seed in 0..args.seeds {
            let r = check.run(a, seed)?;
            println!("gradcheck.{a}.seed{seed}={:.3e}", r.max_rel_error);
            worst = worst.max(r.max_rel_error);
        }
        let pass = worst <= FUSE_GRAD_TOLERANCE;
        all_pass &= pass;
        println!("gradcheck.{a}.max={worst:.3e}");
        println!(
            "gradcheck.{a}.status={}",
            if pass { "pass" } else { "fail" }
        );
    }
    println!("gradcheck.tolerance={FUSE_GRAD_TOLERANCE:.0e}");
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
