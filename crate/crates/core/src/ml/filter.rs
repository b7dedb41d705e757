//! The learned spurious-index filter: a workload-agnostic regression model
//! over (query, index) structure and statistics that predicts the relative
//! improvement an index would bring, so that candidates below a threshold
//! can be pruned without what-if calls.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::candidates::{generate_syntactic_indexes, CandidatePair, DEFAULT_MAX_KEY_WIDTH};
use crate::engine::{
    index_covers, index_provides_sort_order, match_prefix, EngineAdapter, VirtualEngine,
};
use crate::error::{Error, Result};
use crate::ir::{
    Catalog, ClauseRole, Configuration, IndexDef, LogicalQuery, PlanDescriptor, QueryId,
    TableAccess, Workload,
};
use crate::ml::learner::{self, FittedModel, LearnerKind, LearnerParams};
use crate::sql::extract_indexable_columns;

/// Relative improvement below which an index counts as spurious.
pub const DEFAULT_TAU_LABEL: f64 = 0.05;

/// Maximum tolerated false-negative rate when picking the decision threshold.
pub const TARGET_FN_RATE: f64 = 0.10;

pub const FILTER_FEATURE_NAMES: [&str; 12] = [
    "leading_key_selectivity",
    "matched_prefix_selectivity",
    "covering",
    "log2_rows",
    "baseline_already_seek",
    "provides_order",
    "key_width",
    "leading_role_eq",
    "leading_role_join",
    "leading_role_range",
    "leading_role_other",
    "table_fraction",
];

pub fn filter_feature_names() -> Vec<String> {
    FILTER_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Validation metrics embedded in a trained filter model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterMetrics {
    pub validation_pairs: usize,
    pub false_negative_rate: f64,
    pub spurious_pruned_fraction: f64,
}

/// Trained spurious-index filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterModel {
    pub params: LearnerParams,
    pub model: FittedModel,
    /// Decision threshold on predicted relative improvement, in (0, 1).
    pub tau_pred: f64,
    /// Relative improvement defining "spurious" during labeling.
    pub tau_label: f64,
    pub metrics: FilterMetrics,
}

impl FilterModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.model.predict(features)
    }
}

/// Fixed-order features of a (query, index) pair. Uses only the query, the
/// index definition, statistics, and the query's baseline plan — no what-if
/// call is made here.
pub fn featurize_filter_pair(
    q: &LogicalQuery,
    index: &IndexDef,
    baseline_plan: &PlanDescriptor,
    catalog: &Catalog,
) -> Result<Vec<f64>> {
    let stats = catalog.stats(&index.table)?;
    let leading = &index.key_columns[0];
    let leading_sel = q
        .predicates
        .iter()
        .find(|p| p.column.table == index.table && &p.column.column == leading)
        .map(|p| p.selectivity)
        .unwrap_or(1.0);
    let m = match_prefix(q, index);
    let covering = index_covers(q, index);
    let already_seek = matches!(
        baseline_plan.access(&index.table),
        Some(TableAccess::IndexSeek { .. })
    );
    let provides_order = index_provides_sort_order(q, index);
    let leading_role = extract_indexable_columns(q)
        .into_iter()
        .find(|c| c.table == index.table && &c.column == leading)
        .map(|c| c.role);
    let mut one_hot = [0.0; 4];
    match leading_role {
        Some(ClauseRole::FilterEq) => one_hot[0] = 1.0,
        Some(ClauseRole::Join) => one_hot[1] = 1.0,
        Some(ClauseRole::FilterRange) => one_hot[2] = 1.0,
        _ => one_hot[3] = 1.0,
    }
    Ok(vec![
        leading_sel,
        m.selectivity,
        if covering { 1.0 } else { 0.0 },
        (stats.rows as f64).log2(),
        if already_seek { 1.0 } else { 0.0 },
        if provides_order { 1.0 } else { 0.0 },
        index.key_columns.len() as f64,
        one_hot[0],
        one_hot[1],
        one_hot[2],
        one_hot[3],
        1.0 / q.tables.len() as f64,
    ])
}

/// Oracle label: relative improvement of adding `index` on top of `base`,
/// from two what-if calls.
pub fn relative_improvement(
    engine: &dyn EngineAdapter,
    q: &LogicalQuery,
    base: &Configuration,
    index: &IndexDef,
) -> Result<f64> {
    let before = engine.optimize(q, base)?.estimated_cost;
    let after = engine
        .optimize(q, &base.with(index.clone()))?
        .estimated_cost;
    Ok((before - after) / before)
}

/// Trains the filter on (query, index) pairs generated from several
/// databases. Labels come from virtual-engine what-if improvement; the
/// decision threshold is the largest value whose validation false-negative
/// rate stays within [`TARGET_FN_RATE`].
pub fn train_filter(training_dbs: &[(Catalog, Workload)], tau_label: f64) -> Result<FilterModel> {
    if training_dbs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "filter training needs at least 3 databases, got {}",
            training_dbs.len()
        )));
    }
    let mut per_db: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
    for (catalog, workload) in training_dbs {
        let engine = VirtualEngine::new(catalog.clone());
        let empty = Configuration::empty();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for q in &workload.queries {
            let baseline = engine.optimize(q, &empty)?;
            let plan = baseline
                .plan
                .clone()
                .ok_or_else(|| Error::Capability("plan descriptors".into()))?;
            for pair in generate_syntactic_indexes(q, DEFAULT_MAX_KEY_WIDTH) {
                rows.push(featurize_filter_pair(q, &pair.index, &plan, catalog)?);
                labels.push(relative_improvement(&engine, q, &empty, &pair.index)?);
            }
        }
        per_db.push((rows, labels));
    }
    if per_db.iter().map(|(r, _)| r.len()).sum::<usize>() < 20 {
        return Err(Error::InsufficientData(
            "filter training produced too few pairs".into(),
        ));
    }

    // Leave-one-database-out cross-validation: each fold trains on the
    // other databases and takes the largest threshold whose false-negative
    // rate on the held-out database stays within target. The deployed
    // threshold is the median over folds and the deployed model trains on
    // every database, so both the threshold and the model reflect
    // cross-database generalization.
    let params = LearnerParams::new(LearnerKind::BoostedTrees).with_min_samples_leaf(3);
    let mut fold_taus = Vec::new();
    for held_out in 0..per_db.len() {
        let mut fold_rows = Vec::new();
        let mut fold_labels = Vec::new();
        for (i, (r, l)) in per_db.iter().enumerate() {
            if i != held_out {
                fold_rows.extend(r.iter().cloned());
                fold_labels.extend(l.iter().cloned());
            }
        }
        let fold_model = learner::fit(&params, &fold_rows, &fold_labels)?;
        let (vr, vl) = &per_db[held_out];
        let mut positive_preds: Vec<f64> = vr
            .iter()
            .zip(vl.iter())
            .filter(|(_, l)| **l >= tau_label)
            .map(|(r, _)| fold_model.predict(r))
            .collect();
        positive_preds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if positive_preds.is_empty() {
            continue;
        }
        let allowed = (TARGET_FN_RATE * positive_preds.len() as f64).floor() as usize;
        fold_taus.push(positive_preds[allowed.min(positive_preds.len() - 1)]);
    }
    let raw_tau = crate::ml::median(&mut fold_taus);
    let tau_pred = if raw_tau.is_finite() {
        raw_tau
    } else {
        tau_label
    }
    .clamp(1e-6, 0.999);

    let (val_rows, val_labels) = per_db.last().cloned().expect("at least three databases");
    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    for (r, l) in per_db {
        train_rows.extend(r);
        train_labels.extend(l);
    }
    let model = learner::fit(&params, &train_rows, &train_labels)?;

    let mut fn_count = 0usize;
    let mut positives = 0usize;
    let mut spurious = 0usize;
    let mut spurious_pruned = 0usize;
    for (r, l) in val_rows.iter().zip(val_labels.iter()) {
        let pruned = model.predict(r) < tau_pred;
        if *l >= tau_label {
            positives += 1;
            if pruned {
                fn_count += 1;
            }
        } else {
            spurious += 1;
            if pruned {
                spurious_pruned += 1;
            }
        }
    }
    let metrics = FilterMetrics {
        validation_pairs: val_rows.len(),
        false_negative_rate: if positives == 0 {
            0.0
        } else {
            fn_count as f64 / positives as f64
        },
        spurious_pruned_fraction: if spurious == 0 {
            0.0
        } else {
            spurious_pruned as f64 / spurious as f64
        },
    };
    Ok(FilterModel {
        params,
        model,
        tau_pred,
        tau_label,
        metrics,
    })
}

/// Applies the filter to candidate pairs: keeps pairs whose predicted
/// relative improvement reaches the decision threshold. `None` is
/// pass-through mode. An index disappears from the candidate set only when
/// it is pruned for every query interested in it, which the downstream union
/// over kept pairs realizes. No what-if calls are made beyond the baseline
/// plans already supplied.
pub fn filter_candidates(
    model: Option<&FilterModel>,
    pairs: &[CandidatePair],
    baseline_plans: &BTreeMap<QueryId, PlanDescriptor>,
    workload: &Workload,
    catalog: &Catalog,
) -> Result<Vec<CandidatePair>> {
    let Some(model) = model else {
        return Ok(pairs.to_vec());
    };
    let mut kept = Vec::new();
    for pair in pairs {
        let q = workload.get(&pair.query_id).ok_or_else(|| {
            Error::InvalidRequest(format!(
                "candidate references unknown query '{}'",
                pair.query_id
            ))
        })?;
        let plan = baseline_plans.get(&pair.query_id).ok_or_else(|| {
            Error::InvalidRequest(format!(
                "missing baseline plan for query '{}'",
                pair.query_id
            ))
        })?;
        let features = featurize_filter_pair(q, &pair.index, plan, catalog)?;
        if model.predict(&features) >= model.tau_pred {
            kept.push(pair.clone());
        }
    }
    Ok(kept)
}
