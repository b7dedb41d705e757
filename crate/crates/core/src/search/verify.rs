//! Regression verification of a recommended configuration: the QPR model
//! predicts, per query, whether the plan the configuration induces regresses
//! against the baseline plan; indexes behind predicted regressions are
//! removed until no regression is predicted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::EngineAdapter;
use crate::error::{Error, Result};
use crate::ir::{Configuration, IndexId, LogicalQuery, PlanDescriptor, QueryId, Workload};
use crate::ml::qpr::{qpr_predict, QprModel, QprPrediction};

use super::{improvement_fraction, SearchResult, WhatIfCoster};

/// Per-query verification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryVerification {
    pub query_id: QueryId,
    pub old_signature: String,
    pub new_signature: String,
    pub predicted_log_ratio: f64,
    pub probability: f64,
    pub flagged: bool,
}

/// Outcome of the verification stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub vetoed: Vec<IndexId>,
    /// Final-pass predictions per query.
    pub per_query: Vec<QueryVerification>,
    pub passes: u32,
    /// What-if calls spent on verification re-costing.
    pub verification_calls: u64,
}

fn max_log2_rows(q: &LogicalQuery, engine: &dyn EngineAdapter) -> Result<f64> {
    let mut m = 0.0f64;
    for t in &q.tables {
        m = m.max((engine.get_stats(t)?.rows as f64).log2());
    }
    Ok(m)
}

fn plan_of(
    engine: &dyn EngineAdapter,
    q: &LogicalQuery,
    c: &Configuration,
) -> Result<(f64, PlanDescriptor)> {
    let res = engine.optimize(q, c)?;
    let plan = res
        .plan
        .ok_or_else(|| Error::Capability("plan descriptors required for verification".into()))?;
    Ok((res.estimated_cost, plan))
}

/// Verifies the result's configuration query by query, removing the index a
/// predicted-regressing query seeks on (smallest id first) and re-costing
/// until no query is predicted to regress. Each pass removes at least one
/// index, so the loop terminates. The adjusted result's costs come from raw
/// what-if calls.
pub fn verify_no_regression(
    result: &SearchResult,
    qpr: &QprModel,
    engine: &dyn EngineAdapter,
    w: &Workload,
) -> Result<(SearchResult, VerificationReport)> {
    if !engine.capabilities().supports_plan_descriptor {
        return Err(Error::Capability("plan descriptors".into()));
    }
    let calls_at_start = engine.accounting().whatif_calls;
    let empty = Configuration::empty();
    let mut config = result.configuration.clone();
    let mut vetoed: Vec<IndexId> = Vec::new();
    let mut passes = 0u32;

    let final_records = loop {
        passes += 1;
        let mut records: Vec<QueryVerification> = Vec::new();
        let mut action: Option<(QueryId, IndexId)> = None;
        for q in &w.queries {
            let (est_old, old_plan) = plan_of(engine, q, &empty)?;
            let (est_new, new_plan) = plan_of(engine, q, &config)?;
            if old_plan.signature == new_plan.signature {
                continue;
            }
            let rows = max_log2_rows(q, engine)?;
            let pred: QprPrediction =
                qpr_predict(qpr, &old_plan, &new_plan, est_old, est_new, rows);
            records.push(QueryVerification {
                query_id: q.id.clone(),
                old_signature: old_plan.signature.clone(),
                new_signature: new_plan.signature.clone(),
                predicted_log_ratio: pred.predicted_log_ratio,
                probability: pred.probability,
                flagged: pred.regression,
            });
            if pred.regression && action.is_none() {
                // The index this query's new plan seeks on; smallest id wins.
                let seek = new_plan
                    .seek_index_ids()
                    .into_iter()
                    .find(|id| config.contains(id));
                if let Some(id) = seek {
                    action = Some((q.id.clone(), id));
                }
            }
        }
        match action {
            Some((_, index_id)) if !config.is_empty() => {
                config.remove(&index_id);
                vetoed.push(index_id);
            }
            _ => break records,
        }
    };

    // Re-cost the adjusted configuration with raw what-if.
    let coster = WhatIfCoster { engine };
    let baseline = super::workload_cost(w, &empty, &coster)?;
    let fin = super::workload_cost(w, &config, &coster)?;
    let per_query: BTreeMap<QueryId, (f64, f64)> = baseline
        .per_query
        .iter()
        .map(|(id, b)| (id.clone(), (*b, fin.per_query[id])))
        .collect();
    let verification_calls = engine.accounting().whatif_calls - calls_at_start;

    let mut adjusted = result.clone();
    adjusted.configuration = config;
    adjusted.baseline_cost = baseline.total;
    adjusted.final_cost = fin.total;
    adjusted.per_query = per_query;
    adjusted.improvement = improvement_fraction(baseline.total, fin.total);
    adjusted.whatif_calls_used = result.whatif_calls_used + verification_calls;

    let report = VerificationReport {
        vetoed,
        per_query: final_records,
        passes,
        verification_calls,
    };
    Ok((adjusted, report))
}
