use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde_json::Value;

use idxtune_core::engine::{EngineAdapter, VirtualEngine};
use idxtune_core::ir::TuningConstraints;
use idxtune_core::plan::{
    build_plan, run_plan, CompressionRequest, EnumeratorKind, FeatureRequest, TuningRequest,
};
use idxtune_core::report::assemble_report;

use super::{load_schema, load_workload, CliError, CliResult};

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Workload file (.json rows or .sql one statement per line).
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Schema/statistics JSON file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Maximum number of recommended indexes (K).
    #[arg(long)]
    pub max_indexes: Option<usize>,
    /// Storage budget for the configuration, in megabytes.
    #[arg(long)]
    pub storage_mb: Option<u64>,
    /// What-if optimizer call budget for the whole session.
    #[arg(long)]
    pub what_if_budget: Option<u64>,
    /// greedy | autoadmin | two-phase | mcts | exhaustive.
    #[arg(long)]
    pub enumerator: Option<String>,
    /// off | isum:<k>.
    #[arg(long)]
    pub compress: Option<String>,
    /// on | off | auto.
    #[arg(long)]
    pub filter: Option<String>,
    /// on | off.
    #[arg(long)]
    pub cost_models: Option<String>,
    /// on | off | auto.
    #[arg(long)]
    pub qpr: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print the tuning plan DAG (with inclusion reasons) and exit.
    #[arg(long, default_value_t = false)]
    pub explain_plan: bool,
    /// JSON config file that may supply any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flags resolved against the optional config file: explicit flags win,
/// then config values, then defaults.
struct Resolved {
    workload: PathBuf,
    schema: PathBuf,
    request: TuningRequest,
    report_path: PathBuf,
}

fn cfg_str(cfg: &BTreeMap<String, Value>, key: &str) -> Option<String> {
    cfg.get(key).and_then(|v| v.as_str().map(str::to_string))
}

fn cfg_u64(cfg: &BTreeMap<String, Value>, key: &str) -> Option<u64> {
    cfg.get(key).and_then(Value::as_u64)
}

fn resolve(args: &TuneArgs) -> Result<Resolved, CliError> {
    let cfg: BTreeMap<String, Value> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::validation(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        None => BTreeMap::new(),
    };

    let workload = args
        .workload
        .clone()
        .or_else(|| cfg_str(&cfg, "workload").map(PathBuf::from))
        .ok_or_else(|| CliError::validation("--workload is required"))?;
    let schema = args
        .schema
        .clone()
        .or_else(|| cfg_str(&cfg, "schema").map(PathBuf::from))
        .ok_or_else(|| CliError::validation("--schema is required"))?;

    let max_indexes = args
        .max_indexes
        .or_else(|| cfg_u64(&cfg, "max_indexes").map(|v| v as usize))
        .unwrap_or(20);
    let mut constraints = TuningConstraints::new(max_indexes)?;
    if let Some(mb) = args.storage_mb.or_else(|| cfg_u64(&cfg, "storage_mb")) {
        constraints = constraints.with_storage_budget(mb * 1024 * 1024);
    }
    if let Some(calls) = args
        .what_if_budget
        .or_else(|| cfg_u64(&cfg, "what_if_budget"))
    {
        constraints = constraints.with_whatif_budget(calls);
    }

    let mut request = TuningRequest::new(constraints);
    if let Some(e) = args
        .enumerator
        .clone()
        .or_else(|| cfg_str(&cfg, "enumerator"))
    {
        request.enumerator = EnumeratorKind::parse(&e)?;
    }
    if let Some(c) = args.compress.clone().or_else(|| cfg_str(&cfg, "compress")) {
        request.compression = CompressionRequest::parse(&c)?;
    }
    if let Some(f) = args.filter.clone().or_else(|| cfg_str(&cfg, "filter")) {
        request.filter = FeatureRequest::parse(&f)?;
    }
    if let Some(m) = args
        .cost_models
        .clone()
        .or_else(|| cfg_str(&cfg, "cost_models"))
    {
        request.cost_models = FeatureRequest::parse(&m)?;
    }
    if let Some(q) = args.qpr.clone().or_else(|| cfg_str(&cfg, "qpr")) {
        request.qpr = FeatureRequest::parse(&q)?;
    }
    request.seed = args.seed.or_else(|| cfg_u64(&cfg, "seed")).unwrap_or(0);

    let report_path = args
        .report
        .clone()
        .or_else(|| cfg_str(&cfg, "report").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("idxtune-report.json"));
    Ok(Resolved {
        workload,
        schema,
        request,
        report_path,
    })
}

pub fn run(args: TuneArgs) -> CliResult {
    let resolved = resolve(&args)?;
    let catalog = load_schema(&resolved.schema)?;
    let (workload, _arrivals) = load_workload(&resolved.workload, &catalog)?;
    if workload.is_empty() {
        return Err(CliError::validation("the workload contains no queries"));
    }
    let request = resolved.request;

    // Budget feasibility: the baseline costing alone needs one call per query.
    if let Some(budget) = request.constraints.whatif_budget {
        if budget < workload.len() as u64 + 1 {
            return Err(CliError::budget(format!(
                "what-if budget {budget} cannot cover baseline costing of {} queries",
                workload.len()
            )));
        }
    }
    if request.enumerator == EnumeratorKind::Mcts && request.constraints.whatif_budget.is_none() {
        return Err(CliError::budget(
            "the mcts enumerator requires --what-if-budget",
        ));
    }

    let engine = VirtualEngine::new(catalog);
    let plan = build_plan(&request, &engine.capabilities(), workload.len())?;
    if args.explain_plan {
        println!("{}", serde_json::to_string_pretty(&plan)?);
        return Ok(());
    }

    let before = engine.accounting();
    let outcome = run_plan(&plan, &engine, &request, &workload)?;
    let report = assemble_report(&outcome, &engine, &request, before)?;
    std::fs::write(&resolved.report_path, report.to_json()?)?;

    println!(
        "recommended {} index(es); improvement {:.2}%; {} what-if calls ({} cache hits, {} model-served)",
        report.recommended.len(),
        report.improvement * 100.0,
        report.whatif_calls,
        report.cache_hits,
        report.model_served_costings,
    );
    for r in &report.recommended {
        println!("  {}", r.ddl);
    }
    if !report.vetoed.is_empty() {
        println!("vetoed after regression verification:");
        for v in &report.vetoed {
            println!("  {} ({})", v.index_id, v.reason);
        }
    }
    println!("report written to {}", resolved.report_path.display());
    Ok(())
}
