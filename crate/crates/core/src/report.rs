//! The tuning report: everything a run produced, self-contained enough to
//! replay. Timing fields live in their own section so byte-level comparisons
//! can drop them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{CallAccounting, EngineAdapter};
use crate::error::{Error, Result};
use crate::ir::{Configuration, IndexDef, IndexId, QueryId};
use crate::plan::{RunOutcome, TuningPlan, TuningRequest};
use crate::search::TracePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedIndex {
    pub id: IndexId,
    pub ddl: String,
    pub index: IndexDef,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerQueryReport {
    pub weight: f64,
    pub cost_before: f64,
    pub cost_after: f64,
    pub improvement: f64,
    /// Indexes the final plan seeks on for this query.
    pub indexes_used: Vec<IndexId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VetoReport {
    pub index_id: IndexId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QprQueryReport {
    pub query_id: QueryId,
    pub predicted_log_ratio: f64,
    pub probability: f64,
    pub flagged: bool,
}

/// Filter-stage summary embedded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStageReport {
    pub pairs_before: usize,
    pub pairs_after: usize,
    pub tau_pred: f64,
    pub validation_false_negative_rate: f64,
    pub validation_spurious_pruned_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelStageReport {
    pub templates_modeled: usize,
    pub templates_within_target: usize,
    pub total_training_calls: u64,
    pub median_quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStageReport {
    pub original_queries: usize,
    pub selected_queries: usize,
    pub selected_ids: Vec<QueryId>,
}

/// The report `cmd_tune` emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub recommended: Vec<RecommendedIndex>,
    pub improvement: f64,
    pub baseline_cost: f64,
    pub final_cost: f64,
    pub per_query: BTreeMap<QueryId, PerQueryReport>,
    pub whatif_calls: u64,
    pub cache_hits: u64,
    pub executions: u64,
    pub model_served_costings: u64,
    pub configs_evaluated: u64,
    pub budget_exhausted: bool,
    pub strategy: String,
    pub trace: Vec<TracePoint>,
    pub vetoed: Vec<VetoReport>,
    pub qpr_predictions: Vec<QprQueryReport>,
    pub compression: Option<CompressionStageReport>,
    pub filter: Option<FilterStageReport>,
    pub cost_models: Option<CostModelStageReport>,
    pub plan: TuningPlan,
    /// Fully resolved request, sufficient to replay the run.
    pub config: TuningRequest,
    /// Per-stage wall times; excluded from reproducibility comparisons.
    pub timings_ms: BTreeMap<String, f64>,
}

impl TuningReport {
    /// Headline improvement recomputed from the per-query entries; matches
    /// `improvement` within 1e-9.
    pub fn recomputed_improvement(&self) -> f64 {
        let before: f64 = self
            .per_query
            .values()
            .map(|p| p.weight * p.cost_before)
            .sum();
        let after: f64 = self
            .per_query
            .values()
            .map(|p| p.weight * p.cost_after)
            .sum();
        if before <= 0.0 {
            0.0
        } else {
            ((before - after) / before).clamp(0.0, 1.0)
        }
    }

    /// The same document with timing fields zeroed, for byte comparisons.
    pub fn without_timings(&self) -> TuningReport {
        let mut r = self.clone();
        r.timings_ms = BTreeMap::new();
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TuningReport> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Assembles the report from a run outcome. Per-query costs are re-read
/// through the engine (cache hits) so the report reflects true estimated
/// costs even when models served the search.
pub fn assemble_report(
    outcome: &RunOutcome,
    engine: &dyn EngineAdapter,
    request: &TuningRequest,
    accounting_before: CallAccounting,
) -> Result<TuningReport> {
    let catalog = engine.catalog();
    let empty_config = Configuration::empty();
    let config = outcome
        .search
        .as_ref()
        .map(|s| &s.configuration)
        .unwrap_or(&empty_config);

    let mut recommended = Vec::new();
    for idx in config.iter() {
        recommended.push(RecommendedIndex {
            id: idx.canonical_id(),
            ddl: idx.ddl(),
            index: idx.clone(),
            size_bytes: crate::ir::estimate_index_size(idx, catalog.stats(&idx.table)?)?,
        });
    }

    // True estimated costs per query of the tuned workload.
    let mut per_query = BTreeMap::new();
    let mut total_before = 0.0;
    let mut total_after = 0.0;
    for q in &outcome.tuned_workload.queries {
        let before = engine.optimize(q, &Configuration::empty())?;
        let after = engine.optimize(q, config)?;
        let indexes_used = after
            .plan
            .as_ref()
            .map(|p| p.seek_index_ids())
            .unwrap_or_default();
        total_before += q.weight * before.estimated_cost;
        total_after += q.weight * after.estimated_cost;
        per_query.insert(
            q.id.clone(),
            PerQueryReport {
                weight: q.weight,
                cost_before: before.estimated_cost,
                cost_after: after.estimated_cost,
                improvement: (before.estimated_cost - after.estimated_cost) / before.estimated_cost,
                indexes_used,
            },
        );
    }
    let improvement = if total_before > 0.0 {
        ((total_before - total_after) / total_before).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let vetoed = outcome
        .verification
        .as_ref()
        .map(|v| {
            v.vetoed
                .iter()
                .map(|id| VetoReport {
                    index_id: id.clone(),
                    reason: "predicted query performance regression".into(),
                })
                .collect()
        })
        .unwrap_or_default();
    let qpr_predictions = outcome
        .verification
        .as_ref()
        .map(|v| {
            v.per_query
                .iter()
                .map(|r| QprQueryReport {
                    query_id: r.query_id.clone(),
                    predicted_log_ratio: r.predicted_log_ratio,
                    probability: r.probability,
                    flagged: r.flagged,
                })
                .collect()
        })
        .unwrap_or_default();

    let compression = outcome.compressed.as_ref().map(|c| CompressionStageReport {
        original_queries: outcome.workload.len(),
        selected_queries: c.queries.len(),
        selected_ids: c.selected_ids.clone(),
    });
    let filter = outcome.filter_model.as_ref().map(|m| FilterStageReport {
        pairs_before: outcome.pairs_before_filter,
        pairs_after: outcome.pairs_after_filter,
        tau_pred: m.tau_pred,
        validation_false_negative_rate: m.metrics.false_negative_rate,
        validation_spurious_pruned_fraction: m.metrics.spurious_pruned_fraction,
    });
    let cost_models = outcome.cost_models.as_ref().map(|set| {
        let mut qualities: Vec<f64> = set
            .models
            .values()
            .map(|m| m.quality)
            .filter(|q| q.is_finite())
            .collect();
        CostModelStageReport {
            templates_modeled: set.models.len(),
            templates_within_target: set
                .models
                .values()
                .filter(|m| m.quality <= set.q_target)
                .count(),
            total_training_calls: set.models.values().map(|m| m.training_call_count).sum(),
            median_quality: if qualities.is_empty() {
                None
            } else {
                Some(crate::ml::median(&mut qualities))
            },
        }
    });

    let accounting = engine.accounting();
    Ok(TuningReport {
        recommended,
        improvement,
        baseline_cost: total_before,
        final_cost: total_after,
        per_query,
        whatif_calls: accounting.whatif_calls - accounting_before.whatif_calls,
        cache_hits: accounting.cache_hits - accounting_before.cache_hits,
        executions: accounting.executions - accounting_before.executions,
        model_served_costings: outcome.model_served_costings,
        configs_evaluated: outcome
            .search
            .as_ref()
            .map(|s| s.configs_evaluated)
            .unwrap_or(0),
        budget_exhausted: outcome
            .search
            .as_ref()
            .map(|s| s.budget_exhausted)
            .unwrap_or(false),
        strategy: outcome
            .search
            .as_ref()
            .map(|s| s.strategy.clone())
            .unwrap_or_else(|| "none".into()),
        trace: outcome
            .search
            .as_ref()
            .map(|s| s.trace.clone())
            .unwrap_or_default(),
        vetoed,
        qpr_predictions,
        compression,
        filter,
        cost_models,
        plan: outcome.plan.clone(),
        config: request.clone(),
        timings_ms: outcome.stage_timings_ms.clone(),
    })
}

/// Validates the report against the committed schema document: a flat list
/// of required field paths with expected JSON types.
pub fn validate_report_schema(report_json: &str, schema_doc: &str) -> Result<()> {
    let report: serde_json::Value = serde_json::from_str(report_json)?;
    let schema: serde_json::Value = serde_json::from_str(schema_doc)?;
    let fields = schema
        .get("required_fields")
        .and_then(|v| v.as_object())
        .ok_or_else(|| Error::InvalidRequest("schema document lacks required_fields".into()))?;
    for (path, expected) in fields {
        let expected = expected.as_str().unwrap_or("any");
        let mut cursor = &report;
        for part in path.split('.') {
            cursor = cursor.get(part).ok_or_else(|| {
                Error::InvalidRequest(format!("report is missing required field '{path}'"))
            })?;
        }
        let ok = match expected {
            "number" => cursor.is_number(),
            "string" => cursor.is_string(),
            "boolean" => cursor.is_boolean(),
            "array" => cursor.is_array(),
            "object" => cursor.is_object(),
            _ => true,
        };
        if !ok {
            return Err(Error::InvalidRequest(format!(
                "report field '{path}' is not of type {expected}"
            )));
        }
    }
    Ok(())
}
