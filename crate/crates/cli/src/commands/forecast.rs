use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use idxtune_core::plan::run_forecast;

use super::{load_schema, load_workload, CliError, CliResult};

#[derive(Args, Debug)]
pub struct ForecastArgs {
    /// Workload JSON with arrival_ts fields.
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Number of future buckets to predict.
    #[arg(long, default_value_t = 8)]
    pub horizon: usize,
    #[arg(long)]
    pub bucket_seconds: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ForecastRow {
    template_id: String,
    bucket_seconds: u64,
    history_buckets: usize,
    predicted: Vec<f64>,
}

#[derive(Serialize)]
struct ForecastDoc {
    horizon: usize,
    forecasts: Vec<ForecastRow>,
}

pub fn run(args: ForecastArgs) -> CliResult {
    let catalog = load_schema(&args.schema)?;
    let (workload, arrivals) = load_workload(&args.workload, &catalog)?;
    if arrivals.is_empty() {
        return Err(CliError::validation(
            "the workload file carries no arrival_ts fields to forecast from",
        ));
    }
    let results = run_forecast(&workload, &arrivals, args.horizon, args.bucket_seconds)?;
    let doc = ForecastDoc {
        horizon: args.horizon,
        forecasts: results
            .into_iter()
            .map(|(series, predicted)| ForecastRow {
                template_id: series.template_id.0,
                bucket_seconds: series.bucket_seconds,
                history_buckets: series.counts.len(),
                predicted,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!("forecast written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
