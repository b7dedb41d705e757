//! ML-based query performance regression prediction: learns, over execution
//! telemetry, whether the plan a configuration induces will run slower than
//! the plan it replaces, despite what the optimizer estimates say.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{PlanDescriptor, TableAccess, TemplateId};
use crate::ml::learner::{self, FittedModel, LearnerKind, LearnerParams};

/// Default regression threshold: a measured slowdown beyond 10% counts.
pub const DEFAULT_DELTA: f64 = 0.10;

pub const QPR_FEATURE_NAMES: [&str; 7] = [
    "access_kind_changed",
    "seek_index_changed",
    "sort_elimination_delta",
    "covering_delta",
    "est_log_ratio",
    "log2_rows",
    "join_method_changed",
];

pub fn qpr_feature_names() -> Vec<String> {
    QPR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// One telemetry row: a query template observed under two plans with both
/// estimated and measured costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionLogRow {
    pub template_id: TemplateId,
    pub old_plan: PlanDescriptor,
    pub new_plan: PlanDescriptor,
    pub est_old: f64,
    pub est_new: f64,
    pub measured_old: f64,
    pub measured_new: f64,
    /// log2 of the largest referenced table's row count.
    pub log2_rows: f64,
}

/// Plan-pair delta features.
pub fn qpr_features(
    old_plan: &PlanDescriptor,
    new_plan: &PlanDescriptor,
    est_old: f64,
    est_new: f64,
    log2_rows: f64,
) -> Vec<f64> {
    let mut access_kind_changed = 0.0;
    let mut seek_index_changed = 0.0;
    let mut covering_delta = 0.0;
    for (table, old_access) in &old_plan.accesses {
        let new_access = new_plan.access(table);
        match (old_access, new_access) {
            (TableAccess::FullScan, Some(TableAccess::IndexSeek { covering, .. })) => {
                access_kind_changed = 1.0;
                covering_delta += if *covering { 1.0 } else { 0.0 };
            }
            (TableAccess::IndexSeek { covering, .. }, Some(TableAccess::FullScan)) => {
                access_kind_changed = 1.0;
                covering_delta -= if *covering { 1.0 } else { 0.0 };
            }
            (
                TableAccess::IndexSeek {
                    index_id: old_id,
                    covering: old_cov,
                    ..
                },
                Some(TableAccess::IndexSeek {
                    index_id: new_id,
                    covering: new_cov,
                    ..
                }),
            ) => {
                if old_id != new_id {
                    seek_index_changed = 1.0;
                }
                covering_delta +=
                    (if *new_cov { 1.0 } else { 0.0 }) - (if *old_cov { 1.0 } else { 0.0 });
            }
            _ => {}
        }
    }
    let sort_delta = (if new_plan.sort_eliminated { 1.0 } else { 0.0 })
        - (if old_plan.sort_eliminated { 1.0 } else { 0.0 });
    let join_changed = if old_plan.join_method != new_plan.join_method {
        1.0
    } else {
        0.0
    };
    let est_log_ratio = (est_new.max(1e-9) / est_old.max(1e-9)).ln();
    vec![
        access_kind_changed,
        seek_index_changed,
        sort_delta,
        covering_delta,
        est_log_ratio,
        log2_rows,
        join_changed,
    ]
}

/// Trained regression predictor: a regressor over plan-pair deltas targeting
/// the measured log cost ratio, thresholded at log(1 + delta), with a
/// logistic probability calibrated on a validation split. Keeping the
/// regressor and the threshold separate lets delta change without retraining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QprModel {
    pub params: LearnerParams,
    pub model: FittedModel,
    pub delta: f64,
    /// Logistic calibration (slope, intercept) over the decision margin.
    pub calibration: (f64, f64),
    pub validation_rows: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QprPrediction {
    pub predicted_log_ratio: f64,
    /// Calibrated probability that the new plan regressed.
    pub probability: f64,
    /// Decision: predicted measured ratio exceeds 1 + delta.
    pub regression: bool,
}

/// Trains the QPR predictor from an execution log.
pub fn train_qpr(log: &[ExecutionLogRow], delta: f64) -> Result<QprModel> {
    if log.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "QPR training needs at least 20 log rows, got {}",
            log.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidRequest("QPR delta must be positive".into()));
    }
    let mut train_rows = Vec::new();
    let mut train_targets = Vec::new();
    let mut val_rows = Vec::new();
    let mut val_targets = Vec::new();
    for (i, row) in log.iter().enumerate() {
        let features = qpr_features(
            &row.old_plan,
            &row.new_plan,
            row.est_old,
            row.est_new,
            row.log2_rows,
        );
        let target = (row.measured_new.max(1e-9) / row.measured_old.max(1e-9)).ln();
        if i % 4 == 3 {
            val_rows.push(features);
            val_targets.push(target);
        } else {
            train_rows.push(features);
            train_targets.push(target);
        }
    }
    let params = LearnerParams::new(LearnerKind::BoostedTrees).with_min_samples_leaf(3);
    let model = learner::fit(&params, &train_rows, &train_targets)?;

    // Margin calibration: logistic fit of actual-regression labels against
    // the decision margin on the validation split.
    let threshold = (1.0 + delta).ln();
    let margins: Vec<f64> = val_rows
        .iter()
        .map(|r| model.predict(r) - threshold)
        .collect();
    let labels: Vec<f64> = val_targets
        .iter()
        .map(|t| if *t > threshold { 1.0 } else { 0.0 })
        .collect();
    let calibration = fit_logistic(&margins, &labels);

    Ok(QprModel {
        params,
        model,
        delta,
        calibration,
        validation_rows: val_rows.len(),
    })
}

/// Predicts whether the new plan regressed relative to the old plan.
pub fn qpr_predict(
    model: &QprModel,
    old_plan: &PlanDescriptor,
    new_plan: &PlanDescriptor,
    est_old: f64,
    est_new: f64,
    log2_rows: f64,
) -> QprPrediction {
    let features = qpr_features(old_plan, new_plan, est_old, est_new, log2_rows);
    let predicted_log_ratio = model.model.predict(&features);
    let threshold = (1.0 + model.delta).ln();
    let margin = predicted_log_ratio - threshold;
    let (a, b) = model.calibration;
    let probability = sigmoid(a * margin + b);
    QprPrediction {
        predicted_log_ratio,
        probability,
        regression: predicted_log_ratio > threshold,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic 1-D logistic regression (Newton iterations, L2-regularized).
fn fit_logistic(margins: &[f64], labels: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (1.0f64, 0.0f64);
    let reg = 1e-3;
    for _ in 0..25 {
        let (mut ga, mut gb) = (reg * a, 0.0f64);
        let (mut haa, mut hab, mut hbb) = (reg, 0.0f64, reg);
        for (m, y) in margins.iter().zip(labels.iter()) {
            let p = sigmoid(a * m + b);
            let w = (p * (1.0 - p)).max(1e-9);
            ga += (p - y) * m;
            gb += p - y;
            haa += w * m * m;
            hab += w * m;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-12 {
            break;
        }
        let da = (ga * hbb - gb * hab) / det;
        let db = (gb * haa - ga * hab) / det;
        a -= da;
        b -= db;
        a = a.clamp(-100.0, 100.0);
        b = b.clamp(-100.0, 100.0);
        if da.abs() < 1e-10 && db.abs() < 1e-10 {
            break;
        }
    }
    (a, b)
}
