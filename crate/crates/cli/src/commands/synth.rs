use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::error::Result;
use tacforce_core::labeling::{
    write_forces_csv, write_ft_csv, write_label_manifest, write_labels_csv, write_metadata_csv,
};
use tacforce_core::synth::generate_dataset;

use crate::config::Context;
use crate::report::{atomic_write, Report};

#[derive(Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, short)]
    out: PathBuf,

    /// Skip writing the rendered PNG frames (records still carry their
    /// features).
    #[arg(long)]
    no_images: bool,
}

#[derive(Serialize)]
struct SynthPayload {
    records: usize,
    m: usize,
    n: usize,
    images_written: bool,
}

pub fn run(ctx: &Context, args: SynthArgs) -> Result<()> {
    let images_dir = args.out.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let write_images = !args.no_images;
    let out = generate_dataset(&ctx.config.synth, ctx.config.seed, |id, image| {
        if write_images {
            image.write_png(images_dir.join(format!("{id}.png")))?;
        }
        Ok(())
    })?;

    out.dataset.write_dir(&args.out)?;

    let mut buf = Vec::new();
    out.mesh.write_csv(&mut buf)?;
    atomic_write(args.out.join("mesh.csv"), &buf)?;

    let mut buf = Vec::new();
    write_metadata_csv(&mut buf, &out.fields)?;
    atomic_write(args.out.join("metadata.csv"), &buf)?;

    let mut buf = Vec::new();
    write_forces_csv(&mut buf, &out.fields)?;
    atomic_write(args.out.join("forces.csv"), &buf)?;

    let readings = out.ft_readings(ctx.config.ft_resolution_n);
    let mut buf = Vec::new();
    write_ft_csv(&mut buf, &readings)?;
    atomic_write(args.out.join("ft.csv"), &buf)?;

    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &out.labels)?;
    atomic_write(args.out.join("labels.csv"), &buf)?;
    let grid = out.dataset.grid().expect("synthetic datasets carry their grid");
    write_label_manifest(args.out.join("labels_manifest.json"), &grid, out.labels.len())?;

    let payload = SynthPayload {
        records: out.dataset.records().len(),
        m: out.dataset.m(),
        n: out.dataset.n(),
        images_written: write_images,
    };
    Report::new("synth", ctx.config.seed, &ctx.config_hash, payload)
        .write(args.out.join("report.json"))?;
    println!(
        "synth: {} records in {}",
        out.dataset.records().len(),
        args.out.display()
    );
    Ok(())
}
