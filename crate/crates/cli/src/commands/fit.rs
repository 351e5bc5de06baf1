use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::characterization::{CurveSource, StressStretchCurve};
use tacforce_core::constitutive::LoadCase;
use tacforce_core::error::{Error, Result};
use tacforce_core::fitting::{fit, model_curves, FitConfig, FitProblem, FitResult};

use crate::config::Context;
use crate::report::{atomic_write, require_input, Report};

#[derive(Args)]
pub struct FitArgs {
    /// Uniaxial-tension curve CSV (repeatable).
    #[arg(long = "ua")]
    ua: Vec<PathBuf>,

    /// Pure-shear curve CSV (repeatable).
    #[arg(long = "ps")]
    ps: Vec<PathBuf>,

    /// Equibiaxial curve CSV (repeatable).
    #[arg(long = "eb")]
    eb: Vec<PathBuf>,

    /// Model order K (1-3); defaults to the config value.
    #[arg(long)]
    order: Option<usize>,

    /// Multistart count; defaults to the config value.
    #[arg(long)]
    starts: Option<usize>,

    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitPayload {
    result: FitResult,
    curves: Vec<CurveInfo>,
}

#[derive(Serialize)]
struct CurveInfo {
    case: LoadCase,
    path: String,
    samples: usize,
    rms_kpa: f64,
}

pub fn run(ctx: &Context, args: FitArgs) -> Result<()> {
    let inputs: Vec<(LoadCase, &PathBuf)> = args
        .ua
        .iter()
        .map(|p| (LoadCase::Uniaxial, p))
        .chain(args.ps.iter().map(|p| (LoadCase::PureShear, p)))
        .chain(args.eb.iter().map(|p| (LoadCase::Equibiaxial, p)))
        .collect();
    if inputs.is_empty() {
        return Err(Error::config(
            "no input curves; pass at least one of --ua/--ps/--eb".to_string(),
        ));
    }

    let mut curves = Vec::with_capacity(inputs.len());
    for (case, path) in &inputs {
        require_input(path, "curve file")?;
        curves.push(StressStretchCurve::read_csv_path(*case, CurveSource::Experiment, path)?);
    }

    let order = args.order.unwrap_or(ctx.config.fit.order);
    let problem = FitProblem::new(curves, order)?;
    let fit_config = FitConfig {
        starts: args.starts.unwrap_or(ctx.config.fit.starts),
        seed: ctx.config.seed,
        max_iters: ctx.config.fit.max_iters,
        tol: ctx.config.fit.tol,
        threads: ctx.config.threads,
    };

    let result = fit(&problem, &fit_config)?;
    std::fs::create_dir_all(&args.out)?;

    for (i, curve) in model_curves(&result.params, &problem).iter().enumerate() {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        atomic_write(args.out.join(format!("model_{}_{i}.csv", curve.case())), &buf)?;
    }
    atomic_write(args.out.join("material.json"), result.params.to_json().as_bytes())?;

    let payload = FitPayload {
        curves: inputs
            .iter()
            .zip(&result.per_curve_rms)
            .zip(problem.curves())
            .map(|(((case, path), rms), curve)| CurveInfo {
                case: *case,
                path: path.display().to_string(),
                samples: curve.len(),
                rms_kpa: *rms,
            })
            .collect(),
        result,
    };
    let converged = payload.result.converged;
    Report::new("fit", ctx.config.seed, &ctx.config_hash, payload)
        .write(args.out.join("fit.json"))?;

    if !converged {
        return Err(Error::Optimization(
            "fit did not reach the convergence tolerance; outputs were still written".to_string(),
        ));
    }
    println!("fit: wrote {}", args.out.join("fit.json").display());
    Ok(())
}
