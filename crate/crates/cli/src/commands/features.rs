use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::error::Result;
use tacforce_core::flowfeat::{
    dense_flow, pool_features, write_features_csv, write_flow_path, GrayImage, RegionGrid,
};

use crate::commands::parse_grid;
use crate::config::Context;
use crate::report::{atomic_write, require_input, Report};

#[derive(Args)]
pub struct FeaturesArgs {
    /// Reference (undeformed) grayscale image, PNG or PGM.
    #[arg(long)]
    reference: PathBuf,

    /// Current (deformed) grayscale image.
    #[arg(long)]
    current: PathBuf,

    /// Pooling regions as RxC; defaults to the config value.
    #[arg(long)]
    regions: Option<String>,

    /// Also dump the dense flow field as binary.
    #[arg(long)]
    dump_flow: Option<PathBuf>,

    /// Output features CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FeaturesPayload {
    regions: RegionGrid,
    image_size: [usize; 2],
    features_csv: String,
    flow_dump: Option<String>,
}

pub fn run(ctx: &Context, args: FeaturesArgs) -> Result<()> {
    require_input(&args.reference, "reference image")?;
    require_input(&args.current, "current image")?;

    let reference = GrayImage::from_path(&args.reference)?;
    let current = GrayImage::from_path(&args.current)?;

    let (rows, cols) = match &args.regions {
        Some(raw) => parse_grid(raw, "regions")?,
        None => (ctx.config.regions.rows, ctx.config.regions.cols),
    };
    let regions = RegionGrid::new(rows, cols)?;

    let flow = dense_flow(&reference, &current, &ctx.config.flow)?;
    let features = pool_features(&flow, regions)?;

    let mut buf = Vec::new();
    write_features_csv(&mut buf, &features)?;
    atomic_write(&args.out, &buf)?;

    if let Some(path) = &args.dump_flow {
        write_flow_path(path, &flow)?;
    }

    let sidecar = {
        let mut name = args.out.as_os_str().to_os_string();
        name.push(".json");
        PathBuf::from(name)
    };
    Report::new(
        "features",
        ctx.config.seed,
        &ctx.config_hash,
        FeaturesPayload {
            regions,
            image_size: [reference.width(), reference.height()],
            features_csv: args.out.display().to_string(),
            flow_dump: args.dump_flow.as_ref().map(|p| p.display().to_string()),
        },
    )
    .write(sidecar)?;
    Ok(())
}
