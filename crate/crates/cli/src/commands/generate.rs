use std::path::PathBuf;

use clap::Args;

use idxtune_core::synth::{generate, ArrivalPattern, GeneratorSpec};

use super::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_schema: PathBuf,
    #[arg(long)]
    pub out_workload: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    #[arg(long, default_value_t = 5)]
    pub templates: usize,
    /// Fixed table count (default: 2..4 chosen by seed).
    #[arg(long)]
    pub tables: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    pub join_prob: f64,
    /// none | periodic:<period> | bursty.
    #[arg(long, default_value = "none")]
    pub arrival: String,
}

fn parse_arrival(s: &str) -> Result<ArrivalPattern, CliError> {
    if s == "none" {
        return Ok(ArrivalPattern::None);
    }
    if s == "bursty" {
        return Ok(ArrivalPattern::Bursty);
    }
    if let Some(rest) = s.strip_prefix("periodic:") {
        let period: usize = rest
            .parse()
            .map_err(|_| CliError::validation(format!("bad period '{rest}'")))?;
        if period == 0 {
            return Err(CliError::validation("period must be >= 1"));
        }
        return Ok(ArrivalPattern::Periodic { period });
    }
    Err(CliError::validation(format!(
        "expected none|periodic:<p>|bursty, got '{s}'"
    )))
}

pub fn run(args: GenerateArgs) -> CliResult {
    let mut spec = GeneratorSpec {
        seed: args.seed,
        query_count: args.queries,
        template_count: args.templates,
        join_probability: args.join_prob,
        arrival_pattern: parse_arrival(&args.arrival)?,
        ..Default::default()
    };
    if let Some(t) = args.tables {
        spec.table_count = (t, t);
    }
    let db = generate(&spec)?;
    std::fs::write(
        &args.out_schema,
        serde_json::to_string_pretty(&db.schema_file)?,
    )?;
    std::fs::write(
        &args.out_workload,
        serde_json::to_string_pretty(&db.workload_file)?,
    )?;
    println!(
        "generated {} tables, {} queries ({} templates) -> {}, {}",
        db.catalog.tables.len(),
        db.workload.len(),
        args.templates,
        args.out_schema.display(),
        args.out_workload.display()
    );
    Ok(())
}
