use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::error::Result;
use tacforce_core::labeling::read_ft_csv;
use tacforce_core::learning::{
    evaluate, read_checkpoint, split_dataset, Dataset, DatasetRecord, EvalReport,
};

use crate::config::Context;
use crate::report::{require_input, Report};

#[derive(Args)]
pub struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,

    /// Checkpoint path (sidecar `<model>.json` must sit next to it).
    #[arg(long)]
    model: PathBuf,

    /// F/T readings CSV for the sensor-referenced total-force error.
    #[arg(long)]
    ft: Option<PathBuf>,

    /// Which records to score; the test/train split is re-derived from the
    /// seed stored in the checkpoint sidecar.
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,

    /// Report output path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Test,
    Train,
    All,
}

#[derive(Serialize)]
struct EvalPayload {
    split: Split,
    records_scored: usize,
    metrics: EvalReport,
}

pub fn run(ctx: &Context, args: EvalArgs) -> Result<()> {
    require_input(&args.dataset, "dataset directory")?;
    require_input(&args.model, "checkpoint")?;

    let dataset = Dataset::read_dir(&args.dataset)?;
    let (params, train_config) = read_checkpoint(&args.model)?;

    let (train_idx, test_idx) = split_dataset(dataset.records().len(), train_config.seed);
    let selected: Vec<DatasetRecord> = match args.split {
        Split::Test => test_idx.iter().map(|&i| dataset.records()[i].clone()).collect(),
        Split::Train => train_idx.iter().map(|&i| dataset.records()[i].clone()).collect(),
        Split::All => dataset.records().to_vec(),
    };

    let readings = match &args.ft {
        Some(path) => {
            require_input(path, "F/T readings file")?;
            let file = std::fs::File::open(path)?;
            Some(read_ft_csv(std::io::BufReader::new(file), ctx.config.ft_resolution_n)?)
        }
        None => None,
    };

    let metrics = evaluate(&params, &selected, readings.as_deref())?;
    Report::new(
        "eval",
        ctx.config.seed,
        &ctx.config_hash,
        EvalPayload {
            split: args.split,
            records_scored: selected.len(),
            metrics,
        },
    )
    .write(&args.out)?;
    println!("eval: wrote {}", args.out.display());
    Ok(())
}
