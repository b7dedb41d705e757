//! In-situ per-template cost models: lightweight regressors trained during
//! enumeration that act as a generalized cache for similar
//! (query, configuration) pairs, replacing many what-if calls.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::engine::{
    index_covers, index_provides_sort_order, match_prefix, BudgetScope, EngineAdapter,
};
use crate::error::{Error, Result};
use crate::ir::{Configuration, IndexDef, LogicalQuery, TemplateId};
use crate::ml::learner::{self, FittedModel, LearnerKind, LearnerParams};
use crate::ml::{median, q_error};

/// Default cap on what-if calls spent training one model.
pub const DEFAULT_CALL_CAP: u64 = 50;

/// Default Q-error target at which training stops.
pub const DEFAULT_Q_TARGET: f64 = 1.5;

/// Probe size per training iteration.
const PROBE_SIZE: usize = 5;

/// Seed instances fetched before the first fit.
const SEED_SIZE: usize = 12;

/// Cap on the enumerated instance pool per template.
const POOL_CAP: usize = 512;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CostModelBody {
    /// Learned regressor over instance features (log-cost target).
    Learned {
        params: LearnerParams,
        model: FittedModel,
    },
    /// Degenerate single-binding template: memo only.
    MemoOnly,
}

/// Cost model of one query template.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateCostModel {
    pub template_id: TemplateId,
    pub body: CostModelBody,
    /// Exact costs for every (binding, configuration) pair seen in training.
    pub memo: BTreeMap<String, f64>,
    pub training_call_count: u64,
    /// Median probe Q-error achieved when training stopped; >= 1.
    pub quality: f64,
    pub feature_names: Vec<String>,
}

impl TemplateCostModel {
    /// Predicts the cost of a (binding, configuration) instance; exact for
    /// memoized instances. Returns `None` when the model cannot answer.
    pub fn predict(&self, q: &LogicalQuery, c: &Configuration) -> Option<f64> {
        let key = memo_key(q, c);
        if let Some(v) = self.memo.get(&key) {
            return Some(*v);
        }
        match &self.body {
            CostModelBody::Learned { model, .. } => {
                Some(model.predict(&instance_features(q, c)).exp())
            }
            CostModelBody::MemoOnly => None,
        }
    }
}

/// Set of trained template models plus the quality gate for serving.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CostModelSet {
    pub models: BTreeMap<TemplateId, TemplateCostModel>,
    pub q_target: f64,
}

impl CostModelSet {
    pub fn new(q_target: f64) -> Self {
        CostModelSet {
            models: BTreeMap::new(),
            q_target,
        }
    }

    pub fn insert(&mut self, model: TemplateCostModel) {
        self.models.insert(model.template_id.clone(), model);
    }

    pub fn usable(&self, template: &TemplateId) -> Option<&TemplateCostModel> {
        self.models
            .get(template)
            .filter(|m| m.quality <= self.q_target)
    }
}

/// Where a cost estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    Model,
    WhatIf,
    Cache,
}

/// Serves a cost estimate from the template's model when one of sufficient
/// quality exists (no what-if call); falls back to the engine otherwise.
pub fn cost_or_predict(
    q: &LogicalQuery,
    c: &Configuration,
    models: &CostModelSet,
    engine: &dyn EngineAdapter,
) -> Result<(f64, CostSource)> {
    if let Some(model) = models.usable(&q.template_id) {
        if let Some(pred) = model.predict(q, c) {
            return Ok((pred, CostSource::Model));
        }
    }
    let res = engine.optimize(q, c)?;
    let source = if res.from_cache {
        CostSource::Cache
    } else {
        CostSource::WhatIf
    };
    Ok((res.estimated_cost, source))
}

fn memo_key(q: &LogicalQuery, c: &Configuration) -> String {
    let mut key = String::new();
    for p in &q.predicates {
        key.push_str(&format!("{:.12e},", p.selectivity));
    }
    key.push('|');
    key.push_str(&c.restricted_to(&q.tables).signature());
    key
}

/// Feature names of one template's instance features.
pub fn template_feature_names(q: &LogicalQuery) -> Vec<String> {
    let mut names: Vec<String> = (0..q.predicates.len())
        .map(|i| format!("binding_sel_{i}"))
        .collect();
    for t in &q.tables {
        names.push(format!("{t}.prefix_sel"));
        names.push(format!("{t}.covering"));
        names.push(format!("{t}.order"));
        names.push(format!("{t}.join_lead"));
    }
    names
}

/// Features of one (binding, configuration) instance: the binding's
/// predicate selectivities plus, per table, how the configuration interacts
/// with the template (best matched-prefix selectivity, covering flag, order
/// flag, join-leading-index flag). Computable without optimizer calls.
pub fn instance_features(q: &LogicalQuery, c: &Configuration) -> Vec<f64> {
    let mut f: Vec<f64> = q.predicates.iter().map(|p| p.selectivity).collect();
    for t in &q.tables {
        let mut best_sel = 1.0f64;
        let mut best_cov = 0.0;
        let mut any_order = 0.0;
        let mut join_lead = 0.0;
        let join_col = q.join_pred.as_ref().and_then(|(a, b)| {
            if &a.table == t {
                Some(a.column.as_str())
            } else if &b.table == t {
                Some(b.column.as_str())
            } else {
                None
            }
        });
        for idx in c.on_table(t) {
            let m = match_prefix(q, idx);
            let cov = index_covers(q, idx);
            // Prefer lower selectivity; covering breaks ties.
            if m.selectivity < best_sel || (m.selectivity == best_sel && cov && best_cov == 0.0) {
                best_sel = m.selectivity;
                best_cov = if cov { 1.0 } else { 0.0 };
            }
            if index_provides_sort_order(q, idx) {
                any_order = 1.0;
            }
            if let Some(jc) = join_col {
                if idx.key_columns.first().map(String::as_str) == Some(jc) {
                    join_lead = 1.0;
                }
            }
        }
        f.extend_from_slice(&[best_sel, best_cov, any_order, join_lead]);
    }
    f
}

/// Deterministic candidate configurations for training instances: the empty
/// configuration, singletons of the template-relevant candidates, and seeded
/// random subsets up to `max_size`.
pub fn training_configs(
    candidates: &CandidateSet,
    tables: &[String],
    max_size: usize,
    seed: u64,
) -> Vec<Configuration> {
    let relevant: Vec<&IndexDef> = candidates
        .indexes()
        .filter(|i| tables.iter().any(|t| *t == i.table))
        .collect();
    let mut configs = vec![Configuration::empty()];
    for idx in relevant.iter().take(24) {
        configs.push(Configuration::from_indexes([(*idx).clone()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [2usize, 3, max_size.max(2)];
    for &size in &sizes {
        for _ in 0..6 {
            if relevant.len() < 2 {
                break;
            }
            let mut pool: Vec<usize> = (0..relevant.len()).collect();
            pool.shuffle(&mut rng);
            let chosen: Vec<IndexDef> = pool
                .into_iter()
                .take(size.min(relevant.len()))
                .map(|i| relevant[i].clone())
                .collect();
            configs.push(Configuration::from_indexes(chosen));
        }
    }
    // Dedup by signature, preserving order.
    let mut seen = std::collections::BTreeSet::new();
    configs.retain(|c| seen.insert(c.signature()));
    configs
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Farthest-point traversal over instance features: returns `count` indices
/// maximizing pairwise spread, starting from `from` (already chosen).
fn farthest_points(
    features: &[Vec<f64>],
    chosen: &[usize],
    exclude: &[bool],
    count: usize,
) -> Vec<usize> {
    let mut picked = Vec::new();
    let mut min_dist: Vec<f64> = features
        .iter()
        .map(|f| {
            chosen
                .iter()
                .map(|&c| squared_distance(f, &features[c]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    for _ in 0..count {
        let mut best: Option<usize> = None;
        for i in 0..features.len() {
            if exclude[i] || picked.contains(&i) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => min_dist[i] > min_dist[b],
            };
            if better {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        picked.push(b);
        for i in 0..features.len() {
            min_dist[i] = min_dist[i].min(squared_distance(&features[i], &features[b]));
        }
    }
    picked
}

/// Trains one template's cost model with the iterative procedure: a diverse
/// seed set chosen by farthest-point traversal, then fit / probe / absorb the
/// worst probe until the median probe Q-error reaches the target or the call
/// cap is spent. Every fresh actual cost is one what-if call.
pub fn train_template_cost_model(
    engine: &dyn EngineAdapter,
    bindings: &[&LogicalQuery],
    configs: &[Configuration],
    call_cap: u64,
    q_target: f64,
) -> Result<TemplateCostModel> {
    if bindings.is_empty() {
        return Err(Error::InsufficientData("template has no bindings".into()));
    }
    let template_id = bindings[0].template_id.clone();
    let feature_names = template_feature_names(bindings[0]);
    let start = engine.accounting().whatif_calls;
    let _scope = BudgetScope::arm(engine, Some(call_cap));

    // Degenerate single-binding template: memoize per configuration.
    if bindings.len() < 2 {
        let q = bindings[0];
        let mut memo = BTreeMap::new();
        for c in configs {
            match engine.optimize(q, c) {
                Ok(res) => {
                    memo.insert(memo_key(q, c), res.estimated_cost);
                }
                Err(Error::BudgetExhausted) => break,
                Err(e) => return Err(e),
            }
        }
        return Ok(TemplateCostModel {
            template_id,
            body: CostModelBody::MemoOnly,
            memo,
            training_call_count: engine.accounting().whatif_calls - start,
            quality: 1.0,
            feature_names,
        });
    }

    // Instance pool: bindings x configs, interleaved deterministically.
    let mut instances: Vec<(usize, usize)> = Vec::new();
    'outer: for round in 0..configs.len() {
        for (bi, _) in bindings.iter().enumerate() {
            instances.push((bi, round));
            if instances.len() >= POOL_CAP {
                break 'outer;
            }
        }
    }
    let features: Vec<Vec<f64>> = instances
        .iter()
        .map(|&(bi, ci)| instance_features(bindings[bi], &configs[ci]))
        .collect();

    let mut in_training = vec![false; instances.len()];
    let mut train_idx: Vec<usize> = Vec::new();
    let mut memo: BTreeMap<String, f64> = BTreeMap::new();
    let mut actuals: BTreeMap<usize, f64> = BTreeMap::new();

    let fetch = |i: usize,
                 memo: &mut BTreeMap<String, f64>,
                 actuals: &mut BTreeMap<usize, f64>|
     -> Result<f64> {
        if let Some(v) = actuals.get(&i) {
            return Ok(*v);
        }
        let (bi, ci) = instances[i];
        let res = engine.optimize(bindings[bi], &configs[ci])?;
        memo.insert(memo_key(bindings[bi], &configs[ci]), res.estimated_cost);
        actuals.insert(i, res.estimated_cost);
        Ok(res.estimated_cost)
    };

    // Seed set by farthest-point traversal from instance 0.
    let mut exhausted = false;
    let first_seed = 0usize;
    let mut seeds = vec![first_seed];
    seeds.extend(farthest_points(
        &features,
        &[first_seed],
        &in_training,
        SEED_SIZE - 1,
    ));
    for &s in &seeds {
        match fetch(s, &mut memo, &mut actuals) {
            Ok(_) => {
                in_training[s] = true;
                train_idx.push(s);
            }
            Err(Error::BudgetExhausted) => {
                exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let params = LearnerParams::new(LearnerKind::BoostedTrees)
        .with_min_samples_leaf(2)
        .with_rounds(80);
    let mut body: Option<FittedModel> = None;
    let mut quality = f64::INFINITY;

    while !exhausted {
        let rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
        let targets: Vec<f64> = train_idx
            .iter()
            .map(|&i| actuals[&i].max(1e-9).ln())
            .collect();
        let model = learner::fit(&params, &rows, &targets)?;

        let probes = farthest_points(&features, &train_idx, &in_training, PROBE_SIZE);
        if probes.is_empty() {
            body = Some(model);
            quality = 1.0; // pool fully absorbed: memo answers everything
            break;
        }
        let mut probe_q: Vec<(usize, f64)> = Vec::new();
        for &p in &probes {
            match fetch(p, &mut memo, &mut actuals) {
                Ok(actual) => {
                    let pred = model.predict(&features[p]).exp();
                    probe_q.push((p, q_error(pred, actual)));
                }
                Err(Error::BudgetExhausted) => {
                    exhausted = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if probe_q.is_empty() {
            body = Some(model);
            break;
        }
        let mut qs: Vec<f64> = probe_q.iter().map(|(_, q)| *q).collect();
        let med = median(&mut qs);
        quality = med;
        body = Some(model);
        if med <= q_target || exhausted {
            break;
        }
        // Absorb the worst probe into the training set.
        let (worst, _) = probe_q
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .unwrap();
        in_training[worst] = true;
        train_idx.push(worst);
    }

    // Every probed label has been paid for; the deployed model refits on all
    // of them.
    if body.is_some() && actuals.len() > train_idx.len() {
        let rows: Vec<Vec<f64>> = actuals.keys().map(|&i| features[i].clone()).collect();
        let targets: Vec<f64> = actuals.values().map(|v| v.max(1e-9).ln()).collect();
        body = Some(learner::fit(&params, &rows, &targets)?);
    }

    // Validation probe on untouched instances decides the reported quality,
    // so the serve gate reflects what held-out instances will see.
    if let Some(model) = &body {
        let fetched = vec![false; instances.len()];
        let mut touched = fetched;
        for &i in actuals.keys() {
            touched[i] = true;
        }
        let known: Vec<usize> = actuals.keys().copied().collect();
        let validation = farthest_points(&features, &known, &touched, PROBE_SIZE);
        let mut val_q = Vec::new();
        for &v in &validation {
            match fetch(v, &mut memo, &mut actuals) {
                Ok(actual) => val_q.push(q_error(model.predict(&features[v]).exp(), actual)),
                Err(Error::BudgetExhausted) => break,
                Err(e) => return Err(e),
            }
        }
        if val_q.len() >= 3 {
            quality = median(&mut val_q);
        }
    }

    let training_call_count = engine.accounting().whatif_calls - start;
    let body = match body {
        Some(model) => CostModelBody::Learned { params, model },
        None => CostModelBody::MemoOnly,
    };
    Ok(TemplateCostModel {
        template_id,
        body,
        memo,
        training_call_count,
        quality: if quality.is_finite() {
            quality.max(1.0)
        } else {
            f64::INFINITY
        },
        feature_names,
    })
}
