use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::error::{Error, Result};
use tacforce_core::labeling::{
    bin_forces, ground_truth_rmse, read_force_fields, read_ft_csv, read_metadata_csv,
    total_force_of_field, total_force_of_label, write_label_manifest, write_labels_csv, BinGrid,
    SurfaceExtent, SurfaceMesh,
};
use tacforce_core::util::parallel_map;

use crate::commands::parse_grid;
use crate::config::Context;
use crate::report::{atomic_write, require_input, Report};

#[derive(Args)]
pub struct LabelArgs {
    /// Surface mesh CSV (`node_id,x_mm,y_mm`).
    #[arg(long)]
    mesh: PathBuf,

    /// Nodal force CSV (`indentation_id,node_id,fx_n,fy_n,fz_n`).
    #[arg(long)]
    forces: PathBuf,

    /// Indentation metadata CSV
    /// (`indentation_id,center_x_mm,center_y_mm,depth_mm`).
    #[arg(long)]
    meta: Option<PathBuf>,

    /// F/T readings CSV (`indentation_id,fx_n,fy_n,fz_n`) for the
    /// total-force agreement report.
    #[arg(long)]
    ft: Option<PathBuf>,

    /// Bin grid as RxC; defaults to the config value.
    #[arg(long)]
    grid: Option<String>,

    /// Surface extent as WxH in mm; defaults to the config value.
    #[arg(long)]
    extent: Option<String>,

    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct LabelPayload {
    indentations: usize,
    bins: usize,
    /// Largest per-axis gap between bin-sum totals and node-sum totals, N.
    conservation_worst_n: f64,
    conservation_pass: bool,
    rmse_gt_n: Option<[f64; 3]>,
}

pub fn run(ctx: &Context, args: LabelArgs) -> Result<()> {
    require_input(&args.mesh, "mesh file")?;
    require_input(&args.forces, "forces file")?;

    let (ext_w, ext_h) = match &args.extent {
        Some(raw) => {
            let (w, h) = parse_grid(raw, "extent")?;
            (w as f64, h as f64)
        }
        None => (ctx.config.grid.extent_mm[0], ctx.config.grid.extent_mm[1]),
    };
    let extent = SurfaceExtent::new(ext_w, ext_h)?;
    let (rows, cols) = match &args.grid {
        Some(raw) => parse_grid(raw, "grid")?,
        None => (ctx.config.grid.rows, ctx.config.grid.cols),
    };
    let grid = BinGrid::new(extent, rows, cols)?;

    let mesh_file = std::fs::File::open(&args.mesh)?;
    let mesh = SurfaceMesh::read_csv(std::io::BufReader::new(mesh_file), extent)
        .map_err(|e| Error::schema(format!("{}: {e}", args.mesh.display())))?;

    let metadata = match &args.meta {
        Some(path) => {
            require_input(path, "metadata file")?;
            let file = std::fs::File::open(path)?;
            Some(read_metadata_csv(std::io::BufReader::new(file))
                .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };

    let forces_file = std::fs::File::open(&args.forces)?;
    let fields = read_force_fields(std::io::BufReader::new(forces_file), metadata.clone())
        .map_err(|e| Error::schema(format!("{}: {e}", args.forces.display())))?;

    if let Some(meta) = &metadata {
        check_id_coverage(
            fields.iter().map(|f| f.indentation_id.as_str()),
            meta.keys().map(String::as_str),
            "forces",
            "metadata",
        )?;
    }

    let labels = parallel_map(fields.clone(), ctx.config.threads, |_, field| {
        bin_forces(&field, &mesh, &grid)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // Dual-path totals check over every indentation.
    let mut worst: f64 = 0.0;
    for (field, label) in fields.iter().zip(&labels) {
        let a = total_force_of_field(field);
        let b = total_force_of_label(label);
        for axis in 0..3 {
            worst = worst.max((a[axis] - b[axis]).abs());
        }
    }

    let rmse_gt = match &args.ft {
        Some(path) => {
            require_input(path, "F/T readings file")?;
            let file = std::fs::File::open(path)?;
            let readings = read_ft_csv(std::io::BufReader::new(file), ctx.config.ft_resolution_n)
                .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
            Some(ground_truth_rmse(&labels, &readings)?)
        }
        None => None,
    };

    std::fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &labels)?;
    atomic_write(args.out.join("labels.csv"), &buf)?;
    write_label_manifest(args.out.join("labels_manifest.json"), &grid, labels.len())?;

    let payload = LabelPayload {
        indentations: labels.len(),
        bins: grid.bin_count(),
        conservation_worst_n: worst,
        conservation_pass: worst <= 1e-12,
        rmse_gt_n: rmse_gt,
    };
    Report::new("label", ctx.config.seed, &ctx.config_hash, payload)
        .write(args.out.join("label.json"))?;
    Ok(())
}

/// Both id sets must match exactly; the first ten offenders are reported.
fn check_id_coverage<'a>(
    left: impl Iterator<Item = &'a str>,
    right: impl Iterator<Item = &'a str>,
    left_name: &str,
    right_name: &str,
) -> Result<()> {
    let l: std::collections::BTreeSet<&str> = left.collect();
    let r: std::collections::BTreeSet<&str> = right.collect();
    let mut missing: Vec<String> = l
        .difference(&r)
        .map(|id| format!("{id} (only in {left_name})"))
        .chain(r.difference(&l).map(|id| format!("{id} (only in {right_name})")))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    missing.sort();
    let total = missing.len();
    missing.truncate(10);
    Err(Error::Pairing(format!(
        "{total} mismatched ids between {left_name} and {right_name}: {}{}",
        missing.join(", "),
        if total > 10 { ", ..." } else { "" }
    )))
}
