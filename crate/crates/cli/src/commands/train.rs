use std::path::PathBuf;

use clap::Args;

use idxtune_core::candidates::workload_candidates;
use idxtune_core::engine::VirtualEngine;
use idxtune_core::ir::LogicalQuery;
use idxtune_core::ml::cost_model::{
    train_template_cost_model, training_configs, CostModelSet, DEFAULT_CALL_CAP, DEFAULT_Q_TARGET,
};
use idxtune_core::ml::filter::{filter_feature_names, train_filter, DEFAULT_TAU_LABEL};
use idxtune_core::ml::qpr::{qpr_feature_names, train_qpr, DEFAULT_DELTA};
use idxtune_core::ml::save_model;
use idxtune_core::plan::synth_execution_log;
use idxtune_core::synth::{generate, GeneratorSpec};

use super::{load_schema, load_workload, CliError, CliResult};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of generated databases used for filter/QPR training.
    #[arg(long, default_value_t = 3)]
    pub databases: u64,
    /// Workload to train per-template cost models for (with --schema).
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Execution noise scale for the QPR telemetry log.
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
}

pub fn run(args: TrainArgs) -> CliResult {
    if args.databases < 3 {
        return Err(CliError::validation("--databases must be at least 3"));
    }
    std::fs::create_dir_all(&args.out_dir)?;

    // Filter model from generated databases.
    let mut dbs = Vec::new();
    for i in 0..args.databases {
        let spec = GeneratorSpec {
            query_count: 80,
            template_count: 12,
            join_probability: 0.45,
            ..Default::default()
        }
        .with_seed(args.seed.wrapping_mul(31).wrapping_add(1000 + i));
        let db = generate(&spec)?;
        dbs.push((db.catalog, db.workload));
    }
    let filter = train_filter(&dbs, DEFAULT_TAU_LABEL)?;
    let filter_path = args.out_dir.join("filter.json");
    std::fs::write(&filter_path, save_model(&filter, &filter_feature_names())?)?;
    println!(
        "filter model: tau_pred {:.4}, validation FN rate {:.1}%, spurious pruned {:.1}% -> {}",
        filter.tau_pred,
        filter.metrics.false_negative_rate * 100.0,
        filter.metrics.spurious_pruned_fraction * 100.0,
        filter_path.display()
    );

    // QPR model from simulated execution telemetry.
    let log = synth_execution_log(args.seed, args.sigma)?;
    let qpr = train_qpr(&log, DEFAULT_DELTA)?;
    let qpr_path = args.out_dir.join("qpr.json");
    std::fs::write(&qpr_path, save_model(&qpr, &qpr_feature_names())?)?;
    println!(
        "qpr model: {} log rows, {} validation rows -> {}",
        log.len(),
        qpr.validation_rows,
        qpr_path.display()
    );

    // Per-template cost models for a concrete workload, when given.
    if let (Some(wpath), Some(spath)) = (&args.workload, &args.schema) {
        let catalog = load_schema(spath)?;
        let (workload, _) = load_workload(wpath, &catalog)?;
        let engine = VirtualEngine::new(catalog);
        let (_, candidates) = workload_candidates(&workload, 3);
        let mut by_template: std::collections::BTreeMap<_, Vec<&LogicalQuery>> =
            std::collections::BTreeMap::new();
        for q in &workload.queries {
            by_template
                .entry(q.template_id.clone())
                .or_default()
                .push(q);
        }
        let mut set = CostModelSet::new(DEFAULT_Q_TARGET);
        for (tid, bindings) in by_template {
            let configs = training_configs(
                &candidates,
                &bindings[0].tables,
                8,
                args.seed ^ idxtune_core::hash::fnv64_str(&tid.0),
            );
            let model = train_template_cost_model(
                &engine,
                &bindings,
                &configs,
                DEFAULT_CALL_CAP,
                DEFAULT_Q_TARGET,
            )?;
            println!(
                "cost model {}: {} calls, quality {:.3}",
                tid, model.training_call_count, model.quality
            );
            set.insert(model);
        }
        let names: Vec<String> = set
            .models
            .values()
            .flat_map(|m| {
                m.feature_names
                    .iter()
                    .map(move |f| format!("{}:{}", m.template_id, f))
            })
            .collect();
        let path = args.out_dir.join("cost_models.json");
        std::fs::write(&path, save_model(&set, &names)?)?;
        println!("cost models -> {}", path.display());
    }
    Ok(())
}
