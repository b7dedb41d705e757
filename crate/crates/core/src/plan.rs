//! The index tuning planner: composes tuning operators into an acyclic plan
//! driven by engine capabilities and the user's request, validates it, and
//! executes it over typed in-memory artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{union_candidates, workload_candidates, CandidatePair, CandidateSet};
use crate::engine::{BudgetScope, EngineAdapter, EngineCapabilities};
use crate::error::{Error, Result};
use crate::forecast::{bucketize, forecast_arrivals, ArrivalSeries, DEFAULT_BUCKET_SECONDS};
use crate::ir::{Configuration, PlanDescriptor, QueryId, TuningConstraints, Workload};
use crate::ml::cost_model::{
    train_template_cost_model, training_configs, CostModelSet, DEFAULT_CALL_CAP, DEFAULT_Q_TARGET,
};
use crate::ml::filter::{filter_candidates, train_filter, FilterModel, DEFAULT_TAU_LABEL};
use crate::ml::qpr::{train_qpr, ExecutionLogRow, QprModel, DEFAULT_DELTA};
use crate::search::{
    autoadmin_search, exhaustive_search, greedy_search, mcts_search, twophase_search,
    verify_no_regression, Coster, MctsParams, ModelCoster, SearchBudget, SearchResult,
    VerificationReport, WhatIfCoster,
};
use crate::selection::{compress_workload, CompressedWorkload};
use crate::synth::{generate, GeneratorSpec};

/// The tuning operators a plan composes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    ParseWorkload,
    CollectStats,
    Compress,
    Forecast,
    GenerateCandidates,
    FilterCandidates,
    TrainCostModels,
    Enumerate,
    Combine,
    Evaluate,
    Report,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::ParseWorkload => "parse_workload",
            OperatorKind::CollectStats => "collect_stats",
            OperatorKind::Compress => "compress",
            OperatorKind::Forecast => "forecast",
            OperatorKind::GenerateCandidates => "generate_candidates",
            OperatorKind::FilterCandidates => "filter_candidates",
            OperatorKind::TrainCostModels => "train_cost_models",
            OperatorKind::Enumerate => "enumerate",
            OperatorKind::Combine => "combine",
            OperatorKind::Evaluate => "evaluate",
            OperatorKind::Report => "report",
        }
    }
}

/// One node of a tuning plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOperator {
    pub id: String,
    pub kind: OperatorKind,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

/// Edge from a producer port to a consumer port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from_node: String,
    pub from_port: String,
    pub to_node: String,
    pub to_port: String,
}

/// An acyclic operator graph plus the reasons each optional node was
/// included or left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningPlan {
    pub nodes: Vec<TuningOperator>,
    pub edges: Vec<PlanEdge>,
    pub decisions: Vec<String>,
}

impl TuningPlan {
    pub fn node(&self, id: &str) -> Option<&TuningOperator> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn has_kind(&self, kind: OperatorKind) -> bool {
        self.nodes.iter().any(|n| n.kind == kind)
    }

    /// Validates the plan: ids unique, edges reference known nodes/ports,
    /// every consumer port bound exactly once, and the graph is acyclic.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.clone()) {
                return Err(Error::InvalidRequest(format!(
                    "duplicate node id '{}'",
                    n.id
                )));
            }
        }
        let mut bound: BTreeSet<(String, String)> = BTreeSet::new();
        for e in &self.edges {
            let from = self.node(&e.from_node).ok_or_else(|| {
                Error::InvalidRequest(format!("edge from unknown node '{}'", e.from_node))
            })?;
            if !from.outputs.contains(&e.from_port) {
                return Err(Error::InvalidRequest(format!(
                    "node '{}' has no output port '{}'",
                    e.from_node, e.from_port
                )));
            }
            let to = self.node(&e.to_node).ok_or_else(|| {
                Error::InvalidRequest(format!("edge to unknown node '{}'", e.to_node))
            })?;
            if !to.inputs.contains(&e.to_port) {
                return Err(Error::InvalidRequest(format!(
                    "node '{}' has no input port '{}'",
                    e.to_node, e.to_port
                )));
            }
            if !bound.insert((e.to_node.clone(), e.to_port.clone())) {
                return Err(Error::InvalidRequest(format!(
                    "input port '{}.{}' bound more than once",
                    e.to_node, e.to_port
                )));
            }
        }
        for n in &self.nodes {
            for port in &n.inputs {
                if !bound.contains(&(n.id.clone(), port.clone())) {
                    return Err(Error::InvalidRequest(format!(
                        "input port '{}.{}' is unbound",
                        n.id, port
                    )));
                }
            }
        }
        // Kahn topological order over node dependencies.
        let mut incoming: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for n in &self.nodes {
            incoming.entry(n.id.as_str()).or_default();
        }
        for e in &self.edges {
            incoming
                .get_mut(e.to_node.as_str())
                .unwrap()
                .insert(e.from_node.as_str());
        }
        let mut order = Vec::new();
        let mut ready: Vec<&str> = incoming
            .iter()
            .filter(|(_, deps)| deps.is_empty())
            .map(|(id, _)| *id)
            .collect();
        let mut done: BTreeSet<&str> = BTreeSet::new();
        while let Some(id) = ready.pop() {
            if !done.insert(id) {
                continue;
            }
            order.push(id.to_string());
            let mut newly: Vec<&str> = incoming
                .iter()
                .filter(|(nid, deps)| !done.contains(*nid) && deps.iter().all(|d| done.contains(d)))
                .map(|(nid, _)| *nid)
                .collect();
            newly.sort();
            // Reverse so the lexicographically smallest pops first.
            newly.reverse();
            for n in newly {
                if !ready.contains(&n) {
                    ready.push(n);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::InvalidRequest("tuning plan contains a cycle".into()));
        }
        Ok(order)
    }
}

/// Which enumeration strategy to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumeratorKind {
    Greedy,
    Autoadmin,
    TwoPhase,
    Mcts,
    Exhaustive,
}

impl EnumeratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnumeratorKind::Greedy => "greedy",
            EnumeratorKind::Autoadmin => "autoadmin",
            EnumeratorKind::TwoPhase => "two-phase",
            EnumeratorKind::Mcts => "mcts",
            EnumeratorKind::Exhaustive => "exhaustive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(EnumeratorKind::Greedy),
            "autoadmin" => Ok(EnumeratorKind::Autoadmin),
            "two-phase" => Ok(EnumeratorKind::TwoPhase),
            "mcts" => Ok(EnumeratorKind::Mcts),
            "exhaustive" => Ok(EnumeratorKind::Exhaustive),
            other => Err(Error::InvalidRequest(format!(
                "unknown enumerator '{other}'"
            ))),
        }
    }
}

/// Three-state feature request: forced on, forced off, or capability-driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRequest {
    On,
    Off,
    Auto,
}

impl FeatureRequest {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(FeatureRequest::On),
            "off" => Ok(FeatureRequest::Off),
            "auto" => Ok(FeatureRequest::Auto),
            other => Err(Error::InvalidRequest(format!(
                "expected on|off|auto, got '{other}'"
            ))),
        }
    }
}

/// Workload compression request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CompressionRequest {
    Off,
    Isum { target: usize },
}

impl CompressionRequest {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "off" {
            return Ok(CompressionRequest::Off);
        }
        if let Some(rest) = s.strip_prefix("isum:") {
            let target: usize = rest
                .parse()
                .map_err(|_| Error::InvalidRequest(format!("bad compression target '{rest}'")))?;
            if target == 0 {
                return Err(Error::InvalidRequest(
                    "compression target must be >= 1".into(),
                ));
            }
            return Ok(CompressionRequest::Isum { target });
        }
        Err(Error::InvalidRequest(format!(
            "expected off|isum:<k>, got '{s}'"
        )))
    }
}

/// The resolved tuning request the planner works from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRequest {
    pub constraints: TuningConstraints,
    pub enumerator: EnumeratorKind,
    pub compression: CompressionRequest,
    /// Workload size above which compression is worthwhile.
    pub compression_threshold: usize,
    pub filter: FeatureRequest,
    pub cost_models: FeatureRequest,
    pub qpr: FeatureRequest,
    pub seed: u64,
    pub execution_sigma: f64,
    /// Branch cap for MCTS.
    pub mcts_branch_cap: usize,
    pub autoadmin_m: usize,
    pub twophase_p: usize,
    pub cost_model_call_cap: u64,
    pub cost_model_q_target: f64,
    pub qpr_delta: f64,
    pub filter_tau_label: f64,
}

impl TuningRequest {
    pub fn new(constraints: TuningConstraints) -> Self {
        TuningRequest {
            constraints,
            enumerator: EnumeratorKind::Greedy,
            compression: CompressionRequest::Off,
            compression_threshold: 100,
            filter: FeatureRequest::Auto,
            cost_models: FeatureRequest::Off,
            qpr: FeatureRequest::Auto,
            seed: 0,
            execution_sigma: crate::engine::cost_constants::DEFAULT_EXECUTION_SIGMA,
            mcts_branch_cap: 192,
            autoadmin_m: 1,
            twophase_p: 3,
            cost_model_call_cap: DEFAULT_CALL_CAP,
            cost_model_q_target: DEFAULT_Q_TARGET,
            qpr_delta: DEFAULT_DELTA,
            filter_tau_label: DEFAULT_TAU_LABEL,
        }
    }
}

fn op(kind: OperatorKind, inputs: &[&str], outputs: &[&str]) -> TuningOperator {
    TuningOperator {
        id: kind.as_str().to_string(),
        kind,
        parameters: BTreeMap::new(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

/// Builds the default pipeline for the request and engine capabilities.
/// Every inclusion decision is recorded with a reason.
pub fn build_plan(
    request: &TuningRequest,
    caps: &EngineCapabilities,
    workload_size: usize,
) -> Result<TuningPlan> {
    let mut decisions = Vec::new();
    if !caps.supports_whatif {
        return Err(Error::InvalidRequest(
            "engine does not support what-if optimization; tuning is impossible".into(),
        ));
    }
    if request.filter == FeatureRequest::On && !caps.supports_plan_descriptor {
        return Err(Error::InvalidRequest(
            "filter=on requires plan descriptors, which the engine does not support".into(),
        ));
    }
    if request.qpr == FeatureRequest::On && !caps.supports_execution {
        return Err(Error::InvalidRequest(
            "qpr=on requires execution support, which the engine does not support".into(),
        ));
    }

    let mut nodes = vec![
        op(OperatorKind::ParseWorkload, &[], &["workload"]),
        op(
            OperatorKind::CollectStats,
            &["workload"],
            &["workload", "baselines"],
        ),
    ];
    let mut last = "collect_stats".to_string();
    let mut last_port = "workload".to_string();
    let mut edges = vec![PlanEdge {
        from_node: "parse_workload".into(),
        from_port: "workload".into(),
        to_node: "collect_stats".into(),
        to_port: "workload".into(),
    }];
    let chain = |nodes: &mut Vec<TuningOperator>,
                 edges: &mut Vec<PlanEdge>,
                 last: &mut String,
                 last_port: &mut String,
                 node: TuningOperator,
                 in_port: &str,
                 out_port: &str| {
        edges.push(PlanEdge {
            from_node: last.clone(),
            from_port: last_port.clone(),
            to_node: node.id.clone(),
            to_port: in_port.to_string(),
        });
        *last = node.id.clone();
        *last_port = out_port.to_string();
        nodes.push(node);
    };

    match request.compression {
        CompressionRequest::Isum { target } if workload_size > request.compression_threshold => {
            decisions.push(format!(
                "compress: included (isum:{target} requested and |W|={workload_size} > threshold {})",
                request.compression_threshold
            ));
            let mut node = op(OperatorKind::Compress, &["workload"], &["workload"]);
            node.parameters.insert("target".into(), target.to_string());
            chain(
                &mut nodes,
                &mut edges,
                &mut last,
                &mut last_port,
                node,
                "workload",
                "workload",
            );
        }
        CompressionRequest::Isum { target } => {
            decisions.push(format!(
                "compress: skipped (|W|={workload_size} <= threshold {}; isum:{target} requested)",
                request.compression_threshold
            ));
        }
        CompressionRequest::Off => {
            decisions.push("compress: skipped (not requested)".into());
        }
    }

    chain(
        &mut nodes,
        &mut edges,
        &mut last,
        &mut last_port,
        op(OperatorKind::GenerateCandidates, &["workload"], &["pairs"]),
        "workload",
        "pairs",
    );

    let filter_wanted = match request.filter {
        FeatureRequest::On => true,
        FeatureRequest::Off => {
            decisions.push("filter_candidates: skipped (disabled by request)".into());
            false
        }
        FeatureRequest::Auto => {
            if caps.supports_plan_descriptor {
                true
            } else {
                decisions.push("filter_candidates: skipped (engine lacks plan descriptors)".into());
                false
            }
        }
    };
    if filter_wanted {
        decisions.push("filter_candidates: included".into());
        chain(
            &mut nodes,
            &mut edges,
            &mut last,
            &mut last_port,
            op(OperatorKind::FilterCandidates, &["pairs"], &["pairs"]),
            "pairs",
            "pairs",
        );
    }

    chain(
        &mut nodes,
        &mut edges,
        &mut last,
        &mut last_port,
        op(OperatorKind::Combine, &["pairs"], &["candidates"]),
        "pairs",
        "candidates",
    );

    let models_wanted = match request.cost_models {
        FeatureRequest::On => true,
        FeatureRequest::Auto => true,
        FeatureRequest::Off => {
            decisions.push("train_cost_models: skipped (disabled by request)".into());
            false
        }
    };
    if models_wanted {
        decisions.push("train_cost_models: included".into());
        chain(
            &mut nodes,
            &mut edges,
            &mut last,
            &mut last_port,
            op(
                OperatorKind::TrainCostModels,
                &["candidates"],
                &["candidates", "models"],
            ),
            "candidates",
            "candidates",
        );
    }

    let mut enumerate = op(OperatorKind::Enumerate, &["candidates"], &["result"]);
    enumerate
        .parameters
        .insert("strategy".into(), request.enumerator.as_str().to_string());
    chain(
        &mut nodes,
        &mut edges,
        &mut last,
        &mut last_port,
        enumerate,
        "candidates",
        "result",
    );

    let qpr_wanted = match request.qpr {
        FeatureRequest::On => true,
        FeatureRequest::Off => {
            decisions.push("evaluate: skipped (qpr disabled by request)".into());
            false
        }
        FeatureRequest::Auto => {
            if caps.supports_execution && caps.supports_plan_descriptor {
                true
            } else {
                decisions.push("evaluate: skipped (engine lacks execution support)".into());
                false
            }
        }
    };
    if qpr_wanted {
        decisions.push("evaluate: included (QPR verification)".into());
        chain(
            &mut nodes,
            &mut edges,
            &mut last,
            &mut last_port,
            op(OperatorKind::Evaluate, &["result"], &["result"]),
            "result",
            "result",
        );
    }

    chain(
        &mut nodes,
        &mut edges,
        &mut last,
        &mut last_port,
        op(OperatorKind::Report, &["result"], &["report"]),
        "result",
        "report",
    );

    let plan = TuningPlan {
        nodes,
        edges,
        decisions,
    };
    plan.validate()?;
    Ok(plan)
}

/// Everything the run produced, kept for the report.
#[derive(Debug)]
pub struct RunOutcome {
    pub plan: TuningPlan,
    pub workload: Workload,
    pub tuned_workload: Workload,
    pub compressed: Option<CompressedWorkload>,
    pub pairs_before_filter: usize,
    pub pairs_after_filter: usize,
    pub candidates: CandidateSet,
    pub filter_model: Option<FilterModel>,
    pub cost_models: Option<CostModelSet>,
    pub qpr_model: Option<QprModel>,
    pub search: Option<SearchResult>,
    pub verification: Option<VerificationReport>,
    pub baseline_plans: BTreeMap<QueryId, PlanDescriptor>,
    pub stage_timings_ms: BTreeMap<String, f64>,
    pub model_served_costings: u64,
}

/// Executes a validated plan node by node in topological order. Deterministic
/// given the request seed and inputs.
pub fn run_plan(
    plan: &TuningPlan,
    engine: &dyn EngineAdapter,
    request: &TuningRequest,
    full_workload: &Workload,
) -> Result<RunOutcome> {
    let order = plan.validate()?;
    let fail = |node: &str, e: Error| Error::PlanNode {
        node: node.to_string(),
        source: Box::new(e),
    };

    let _session_budget = BudgetScope::arm(engine, request.constraints.whatif_budget);

    let mut workload = full_workload.clone();
    let mut tuned_workload = full_workload.clone();
    let mut compressed: Option<CompressedWorkload> = None;
    let mut pairs: Vec<CandidatePair> = Vec::new();
    let mut pairs_before_filter = 0usize;
    let mut candidates = CandidateSet::default();
    let mut filter_model: Option<FilterModel> = None;
    let mut cost_models: Option<CostModelSet> = None;
    let mut qpr_model: Option<QprModel> = None;
    let mut search: Option<SearchResult> = None;
    let mut verification: Option<VerificationReport> = None;
    let mut baseline_plans: BTreeMap<QueryId, PlanDescriptor> = BTreeMap::new();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut model_served = 0u64;

    for node_id in &order {
        let node = plan.node(node_id).expect("validated");
        let t0 = Instant::now();
        match node.kind {
            OperatorKind::ParseWorkload => {
                // The workload arrives parsed; this node is the boundary
                // where file ingestion would happen.
            }
            OperatorKind::CollectStats => {
                let mut baselines = BTreeMap::new();
                for q in &workload.queries {
                    let res = engine
                        .optimize(q, &Configuration::empty())
                        .map_err(|e| fail(node_id, e))?;
                    baselines.insert(q.id.clone(), res.estimated_cost);
                    if let Some(p) = res.plan {
                        baseline_plans.insert(q.id.clone(), p);
                    }
                }
                workload.baseline_costs = Some(baselines);
            }
            OperatorKind::Compress => {
                let target: usize = node
                    .parameters
                    .get("target")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail(node_id, Error::InvalidRequest("missing target".into())))?;
                let c = compress_workload(&workload, engine.catalog(), target)
                    .map_err(|e| fail(node_id, e))?;
                let mut w = Workload::new(c.queries.clone()).map_err(|e| fail(node_id, e))?;
                w.baseline_costs = workload.baseline_costs.as_ref().map(|b| {
                    c.queries
                        .iter()
                        .filter_map(|q| b.get(&q.id).map(|v| (q.id.clone(), *v)))
                        .collect()
                });
                tuned_workload = w.clone();
                workload = w;
                compressed = Some(c);
            }
            OperatorKind::Forecast => {
                // Standalone forecasting runs through `run_forecast`.
            }
            OperatorKind::GenerateCandidates => {
                let (p, _) =
                    workload_candidates(&workload, crate::candidates::DEFAULT_MAX_KEY_WIDTH);
                pairs_before_filter = p.len();
                pairs = p;
            }
            OperatorKind::FilterCandidates => {
                let model = train_filter_for_session(request).map_err(|e| fail(node_id, e))?;
                let kept = filter_candidates(
                    Some(&model),
                    &pairs,
                    &baseline_plans,
                    &workload,
                    engine.catalog(),
                )
                .map_err(|e| fail(node_id, e))?;
                filter_model = Some(model);
                pairs = kept;
            }
            OperatorKind::Combine => {
                candidates = union_candidates(&pairs);
            }
            OperatorKind::TrainCostModels => {
                let set = train_session_cost_models(engine, &workload, &candidates, request)
                    .map_err(|e| fail(node_id, e))?;
                cost_models = Some(set);
            }
            OperatorKind::Enumerate => {
                let budget = SearchBudget {
                    max_whatif_calls: engine.whatif_allowance(),
                    wall_clock: None,
                };
                let mut result = {
                    let coster: Box<dyn Coster> = match &cost_models {
                        Some(models) => Box::new(ModelCoster { engine, models }),
                        None => Box::new(WhatIfCoster { engine }),
                    };
                    run_enumerator(request, &workload, &candidates, &budget, coster.as_ref())
                        .map_err(|e| fail(node_id, e))?
                };
                model_served += result.model_served;
                if cost_models.is_some() {
                    // Model-guided searches report model-predicted costs;
                    // pin the final numbers to true what-if costs.
                    recost_result(&mut result, engine, &workload).map_err(|e| fail(node_id, e))?;
                }
                search = Some(result);
            }
            OperatorKind::Evaluate => {
                let result = search.as_ref().ok_or_else(|| {
                    fail(node_id, Error::InvalidRequest("no search result".into()))
                })?;
                let qpr = train_session_qpr(engine, &workload, result, request)
                    .map_err(|e| fail(node_id, e))?;
                let (adjusted, report) = verify_no_regression(result, &qpr, engine, &workload)
                    .map_err(|e| fail(node_id, e))?;
                qpr_model = Some(qpr);
                verification = Some(report);
                search = Some(adjusted);
            }
            OperatorKind::Report => {
                // Assembly happens in the caller via RunOutcome.
            }
        }
        timings.insert(node_id.clone(), t0.elapsed().as_secs_f64() * 1e3);
    }

    Ok(RunOutcome {
        plan: plan.clone(),
        workload: full_workload.clone(),
        tuned_workload: if compressed.is_some() {
            tuned_workload
        } else {
            full_workload.clone()
        },
        compressed,
        pairs_before_filter,
        pairs_after_filter: pairs.len(),
        candidates,
        filter_model,
        cost_models,
        qpr_model,
        search,
        verification,
        baseline_plans,
        stage_timings_ms: timings,
        model_served_costings: model_served,
    })
}

/// Replaces a search result's cost numbers with raw what-if costs of its
/// configuration.
fn recost_result(
    result: &mut SearchResult,
    engine: &dyn EngineAdapter,
    workload: &Workload,
) -> Result<()> {
    let coster = WhatIfCoster { engine };
    let baseline = crate::search::workload_cost(workload, &Configuration::empty(), &coster)?;
    let fin = crate::search::workload_cost(workload, &result.configuration, &coster)?;
    result.baseline_cost = baseline.total;
    result.final_cost = fin.total;
    result.per_query = baseline
        .per_query
        .iter()
        .map(|(id, b)| (id.clone(), (*b, fin.per_query[id])))
        .collect();
    result.improvement = if baseline.total > 0.0 {
        ((baseline.total - fin.total) / baseline.total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(())
}

pub(crate) fn run_enumerator(
    request: &TuningRequest,
    workload: &Workload,
    candidates: &CandidateSet,
    budget: &SearchBudget,
    coster: &dyn Coster,
) -> Result<SearchResult> {
    match request.enumerator {
        EnumeratorKind::Greedy => {
            greedy_search(workload, candidates, &request.constraints, budget, coster)
        }
        EnumeratorKind::Autoadmin => autoadmin_search(
            workload,
            candidates,
            &request.constraints,
            budget,
            coster,
            request.autoadmin_m,
        ),
        EnumeratorKind::TwoPhase => twophase_search(
            workload,
            candidates,
            &request.constraints,
            budget,
            coster,
            request.twophase_p,
        ),
        EnumeratorKind::Mcts => {
            let budget = match budget.max_whatif_calls {
                Some(_) => *budget,
                None => {
                    return Err(Error::InvalidRequest(
                        "mcts requires --what-if-budget".into(),
                    ))
                }
            };
            mcts_search(
                workload,
                candidates,
                &request.constraints,
                &budget,
                coster,
                &MctsParams {
                    branch_cap: request.mcts_branch_cap,
                    seed: request.seed,
                    ..Default::default()
                },
            )
        }
        EnumeratorKind::Exhaustive => {
            exhaustive_search(workload, candidates, &request.constraints, coster)
        }
    }
}

/// Trains the spurious-index filter from generated databases derived from the
/// session seed; self-contained and deterministic.
fn train_filter_for_session(request: &TuningRequest) -> Result<FilterModel> {
    let mut dbs = Vec::new();
    for i in 0..4u64 {
        let spec = GeneratorSpec {
            query_count: 80,
            template_count: 12,
            join_probability: 0.45,
            ..Default::default()
        }
        .with_seed(request.seed.wrapping_mul(31).wrapping_add(1000 + i));
        let db = generate(&spec)?;
        dbs.push((db.catalog, db.workload));
    }
    train_filter(&dbs, request.filter_tau_label)
}

/// Trains one cost model per template of the workload, within the session
/// budget.
fn train_session_cost_models(
    engine: &dyn EngineAdapter,
    workload: &Workload,
    candidates: &CandidateSet,
    request: &TuningRequest,
) -> Result<CostModelSet> {
    let mut set = CostModelSet::new(request.cost_model_q_target);
    let mut by_template: BTreeMap<&crate::ir::TemplateId, Vec<&crate::ir::LogicalQuery>> =
        BTreeMap::new();
    for q in &workload.queries {
        by_template.entry(&q.template_id).or_default().push(q);
    }
    for (tid, bindings) in by_template {
        let tables = &bindings[0].tables;
        let configs = training_configs(
            candidates,
            tables,
            request.constraints.max_indexes,
            request.seed ^ crate::hash::fnv64_str(&tid.0),
        );
        if configs.len() < 2 {
            continue;
        }
        match train_template_cost_model(
            engine,
            &bindings,
            &configs,
            request.cost_model_call_cap,
            request.cost_model_q_target,
        ) {
            Ok(model) => set.insert(model),
            Err(Error::BudgetExhausted) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(set)
}

/// Builds the execution log from the tuning session itself — the baseline
/// plan and the plans along the search trace — and trains the QPR model on
/// it. Simulated executions are deterministic in (seed, template, plan).
fn train_session_qpr(
    engine: &dyn EngineAdapter,
    workload: &Workload,
    result: &SearchResult,
    request: &TuningRequest,
) -> Result<QprModel> {
    let mut log: Vec<ExecutionLogRow> = Vec::new();
    let empty = Configuration::empty();

    // Configurations to execute: the search result plus its leading subsets
    // (greedy-style traces share most per-query plans with the final
    // configuration), padded with generated-workload telemetry below.
    let mut configs: Vec<Configuration> = vec![result.configuration.clone()];
    let ids: Vec<_> = result.configuration.ids().cloned().collect();
    for drop_n in 1..ids.len().min(6) {
        let sub = Configuration::from_indexes(
            ids[..ids.len() - drop_n]
                .iter()
                .filter_map(|id| {
                    result
                        .configuration
                        .iter()
                        .find(|i| &i.canonical_id() == id)
                })
                .cloned(),
        );
        configs.push(sub);
    }
    // Singleton configurations exercise per-index plan shapes.
    for id in ids.iter().take(8) {
        if let Some(idx) = result
            .configuration
            .iter()
            .find(|i| &i.canonical_id() == id)
        {
            configs.push(Configuration::from_indexes([idx.clone()]));
        }
    }

    for q in &workload.queries {
        let base = engine.optimize(q, &empty)?;
        let base_plan = base
            .plan
            .clone()
            .ok_or_else(|| Error::Capability("plans".into()))?;
        let base_measured = engine.execute(q, &empty, request.seed)?;
        let rows = q
            .tables
            .iter()
            .map(|t| engine.get_stats(t).map(|s| (s.rows as f64).log2()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        for c in &configs {
            let new = engine.optimize(q, c)?;
            let new_plan = new
                .plan
                .clone()
                .ok_or_else(|| Error::Capability("plans".into()))?;
            if new_plan.signature == base_plan.signature {
                continue;
            }
            let new_measured = engine.execute(q, c, request.seed)?;
            log.push(ExecutionLogRow {
                template_id: q.template_id.clone(),
                old_plan: base_plan.clone(),
                new_plan,
                est_old: base.estimated_cost,
                est_new: new.estimated_cost,
                measured_old: base_measured,
                measured_new: new_measured,
                log2_rows: rows,
            });
        }
    }

    // Generated-workload telemetry tops up the log so training sees at
    // least three workloads' worth of plan-pair variety.
    let synth_rows = synth_execution_log(request.seed, request.execution_sigma)?;
    log.extend(synth_rows);
    train_qpr(&log, request.qpr_delta)
}

/// Telemetry from generated databases: every query executed under the empty
/// configuration and under seeded candidate configurations.
pub fn synth_execution_log(seed: u64, sigma: f64) -> Result<Vec<ExecutionLogRow>> {
    use crate::engine::VirtualEngine;
    let mut log = Vec::new();
    for i in 0..3u64 {
        let spec = GeneratorSpec {
            query_count: 24,
            template_count: 6,
            ..Default::default()
        }
        .with_seed(seed.wrapping_mul(97).wrapping_add(500 + i));
        let db = generate(&spec)?;
        let engine = VirtualEngine::new(db.catalog.clone()).with_sigma(sigma);
        let empty = Configuration::empty();
        let (_, cands) = workload_candidates(&db.workload, 2);
        for q in &db.workload.queries {
            let base = engine.optimize(q, &empty)?;
            let base_plan = base.plan.clone().expect("virtual engine plans");
            let base_measured = engine.execute(q, &empty, seed)?;
            let rows = q
                .tables
                .iter()
                .map(|t| (engine.get_stats(t).unwrap().rows as f64).log2())
                .fold(0.0f64, f64::max);
            for entry in cands.for_query(&q.id).iter().take(6) {
                let c = Configuration::from_indexes([entry.index.clone()]);
                let new = engine.optimize(q, &c)?;
                let new_plan = new.plan.clone().expect("virtual engine plans");
                if new_plan.signature == base_plan.signature {
                    continue;
                }
                let new_measured = engine.execute(q, &c, seed)?;
                log.push(ExecutionLogRow {
                    template_id: q.template_id.clone(),
                    old_plan: base_plan.clone(),
                    new_plan,
                    est_old: base.estimated_cost,
                    est_new: new.estimated_cost,
                    measured_old: base_measured,
                    measured_new: new_measured,
                    log2_rows: rows,
                });
            }
        }
    }
    Ok(log)
}

/// Standalone forecasting: buckets arrivals per template and predicts the
/// next `horizon` buckets for each.
pub fn run_forecast(
    workload: &Workload,
    arrivals: &BTreeMap<QueryId, u64>,
    horizon: usize,
    bucket_seconds: Option<u64>,
) -> Result<Vec<(ArrivalSeries, Vec<f64>)>> {
    let width = bucket_seconds.unwrap_or(DEFAULT_BUCKET_SECONDS);
    let series = bucketize(workload, arrivals, width);
    if series.is_empty() {
        return Err(Error::InsufficientData(
            "workload has no arrival timestamps to forecast from".into(),
        ));
    }
    series
        .into_iter()
        .map(|s| {
            let preds = forecast_arrivals(&s, horizon)?;
            Ok((s, preds))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_caps() -> EngineCapabilities {
        EngineCapabilities {
            supports_whatif: true,
            supports_execution: true,
            supports_plan_descriptor: true,
            supports_hypothetical_index: true,
        }
    }

    fn full_request() -> TuningRequest {
        let mut r = TuningRequest::new(TuningConstraints::new(5).unwrap());
        r.compression = CompressionRequest::Isum { target: 20 };
        r.filter = FeatureRequest::On;
        r.cost_models = FeatureRequest::On;
        r.qpr = FeatureRequest::On;
        r
    }

    #[test]
    fn full_plan_has_ten_nodes() {
        let plan = build_plan(&full_request(), &all_caps(), 150).unwrap();
        assert_eq!(plan.nodes.len(), 10);
        let kinds: Vec<OperatorKind> = plan.nodes.iter().map(|n| n.kind).collect();
        assert_eq!(
            kinds,
            vec![
                OperatorKind::ParseWorkload,
                OperatorKind::CollectStats,
                OperatorKind::Compress,
                OperatorKind::GenerateCandidates,
                OperatorKind::FilterCandidates,
                OperatorKind::Combine,
                OperatorKind::TrainCostModels,
                OperatorKind::Enumerate,
                OperatorKind::Evaluate,
                OperatorKind::Report,
            ]
        );
    }

    #[test]
    fn degraded_capabilities_gate_filter_and_evaluate() {
        let caps = EngineCapabilities {
            supports_whatif: true,
            supports_execution: false,
            supports_plan_descriptor: false,
            supports_hypothetical_index: true,
        };
        let mut request = full_request();
        request.filter = FeatureRequest::Auto;
        request.qpr = FeatureRequest::Auto;
        let plan = build_plan(&request, &caps, 150).unwrap();
        assert!(!plan.has_kind(OperatorKind::FilterCandidates));
        assert!(!plan.has_kind(OperatorKind::Evaluate));
        assert!(plan
            .decisions
            .iter()
            .any(|d| d.contains("plan descriptors")));
        assert!(plan.decisions.iter().any(|d| d.contains("execution")));
    }

    #[test]
    fn small_workload_skips_compression() {
        let plan = build_plan(&full_request(), &all_caps(), 50).unwrap();
        assert!(!plan.has_kind(OperatorKind::Compress));
        assert!(plan
            .decisions
            .iter()
            .any(|d| d.contains("compress: skipped")));
    }

    #[test]
    fn contradictory_requests_error() {
        let caps = EngineCapabilities {
            supports_whatif: true,
            supports_execution: false,
            supports_plan_descriptor: true,
            supports_hypothetical_index: true,
        };
        let mut request = full_request();
        request.qpr = FeatureRequest::On;
        assert!(build_plan(&request, &caps, 10).is_err());
    }

    #[test]
    fn cycle_and_unbound_ports_are_rejected() {
        let mut plan = build_plan(&full_request(), &all_caps(), 150).unwrap();
        // Inject a cycle: report -> parse_workload.
        plan.nodes
            .iter_mut()
            .find(|n| n.id == "parse_workload")
            .unwrap()
            .inputs = vec!["loop".into()];
        plan.edges.push(PlanEdge {
            from_node: "report".into(),
            from_port: "report".into(),
            to_node: "parse_workload".into(),
            to_port: "loop".into(),
        });
        assert!(plan.validate().is_err());

        let mut plan2 = build_plan(&full_request(), &all_caps(), 150).unwrap();
        plan2.edges.remove(0);
        let err = plan2.validate().unwrap_err();
        assert!(err.to_string().contains("unbound"));
    }
}
