use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use tacforce_core::error::Result;
use tacforce_core::learning::{train, write_checkpoint, Dataset};

use crate::config::Context;
use crate::report::{atomic_write, require_input, Report};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory (manifest.json + records.csv).
    #[arg(long)]
    dataset: PathBuf,

    /// Checkpoint output path; the TrainConfig sidecar lands at
    /// `<out>.json`, the loss history next to it.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TrainPayload {
    records: usize,
    train_records: usize,
    test_records: usize,
    epochs: usize,
    final_train_mse: Option<f64>,
    checkpoint: String,
}

pub fn run(ctx: &Context, args: TrainArgs) -> Result<()> {
    require_input(&args.dataset, "dataset directory")?;
    let dataset = Dataset::read_dir(&args.dataset)?;
    let model = train(&dataset, &ctx.config.train)?;

    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_checkpoint(&args.out, &model.params, &ctx.config.train)?;

    let mut history = String::from("epoch,train_mse\n");
    for (epoch, loss) in model.loss_history.iter().enumerate() {
        writeln!(history, "{epoch},{loss}").expect("writing to String cannot fail");
    }
    let history_path = {
        let mut name = args.out.as_os_str().to_os_string();
        name.push(".loss.csv");
        PathBuf::from(name)
    };
    atomic_write(&history_path, history.as_bytes())?;

    let report_path = {
        let mut name = args.out.as_os_str().to_os_string();
        name.push(".report.json");
        PathBuf::from(name)
    };
    Report::new(
        "train",
        ctx.config.seed,
        &ctx.config_hash,
        TrainPayload {
            records: dataset.records().len(),
            train_records: model.train_indices.len(),
            test_records: model.test_indices.len(),
            epochs: ctx.config.train.epochs,
            final_train_mse: model.loss_history.last().copied(),
            checkpoint: args.out.display().to_string(),
        },
    )
    .write(report_path)?;
    println!("train: wrote {}", args.out.display());
    Ok(())
}
