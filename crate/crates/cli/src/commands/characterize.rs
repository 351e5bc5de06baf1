use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::characterization::{
    average_curves, inflation_curve, read_inflation_csv_path, read_tension_csv_path,
    tension_curve, StressStretchCurve,
};
use tacforce_core::constitutive::LoadCase;
use tacforce_core::error::{Error, Result};

use crate::config::Context;
use crate::report::{atomic_write, require_input, Report};

#[derive(Args)]
pub struct CharacterizeArgs {
    /// Load case of the input records (ua, ps or eb).
    #[arg(long)]
    case: LoadCaseArg,

    /// Also write the sample-average curve across all inputs.
    #[arg(long)]
    average: bool,

    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,

    /// Measurement CSVs: `lambda,force_n,w0_mm,h0_mm` for ua/ps,
    /// `pressure_kpa,radius_mm,h0_mm,lambda1,lambda2` for eb.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LoadCaseArg {
    Ua,
    Ps,
    Eb,
}

impl From<LoadCaseArg> for LoadCase {
    fn from(v: LoadCaseArg) -> Self {
        match v {
            LoadCaseArg::Ua => LoadCase::Uniaxial,
            LoadCaseArg::Ps => LoadCase::PureShear,
            LoadCaseArg::Eb => LoadCase::Equibiaxial,
        }
    }
}

#[derive(Serialize)]
struct CharacterizePayload {
    case: LoadCase,
    curves_written: Vec<String>,
    thin_membrane_warnings: Vec<String>,
    averaged: Option<String>,
}

pub fn run(ctx: &Context, args: CharacterizeArgs) -> Result<()> {
    let case: LoadCase = args.case.into();
    std::fs::create_dir_all(&args.out)?;

    let mut curves = Vec::with_capacity(args.inputs.len());
    let mut warnings = Vec::new();
    for path in &args.inputs {
        require_input(path, "measurement file")?;
        let curve = match case {
            LoadCase::Equibiaxial => {
                let records = read_inflation_csv_path(path)?;
                let (curve, warned) = inflation_curve(&records)?;
                if warned {
                    warnings.push(path.display().to_string());
                }
                curve
            }
            _ => tension_curve(case, &read_tension_csv_path(path)?)?,
        };
        curves.push(curve);
    }

    let mut written = Vec::new();
    for (path, curve) in args.inputs.iter().zip(&curves) {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::config(format!("cannot derive a name from {}", path.display())))?;
        let out_path = args.out.join(format!("{stem}_curve.csv"));
        write_curve(curve, &out_path)?;
        written.push(out_path.display().to_string());
    }

    let averaged = if args.average {
        let avg = average_curves(&curves)?;
        let out_path = args.out.join("averaged_curve.csv");
        write_curve(&avg, &out_path)?;
        Some(out_path.display().to_string())
    } else {
        None
    };

    for w in &warnings {
        eprintln!("warning: {w}: h0/r >= 0.1, thin-membrane stress formula is approximate");
    }

    Report::new(
        "characterize",
        ctx.config.seed,
        &ctx.config_hash,
        CharacterizePayload {
            case,
            curves_written: written,
            thin_membrane_warnings: warnings,
            averaged,
        },
    )
    .write(args.out.join("characterize.json"))?;
    Ok(())
}

fn write_curve(curve: &StressStretchCurve, path: &std::path::Path) -> Result<()> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    atomic_write(path, &buf)
}
