//! Configuration enumeration: budget bookkeeping, workload costing through a
//! pluggable coster, and the search strategies (greedy, AutoAdmin greedy,
//! two-phase greedy, MCTS, exhaustive) plus regression verification.

pub mod exhaustive;
pub mod greedy;
pub mod mcts;
pub mod verify;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::EngineAdapter;
use crate::error::{Error, Result};
use crate::ir::{Configuration, IndexDef, LogicalQuery, QueryId, TuningConstraints, Workload};
use crate::ml::cost_model::{cost_or_predict, CostModelSet, CostSource};

pub use exhaustive::exhaustive_search;
pub use greedy::{autoadmin_search, greedy_search, twophase_search};
pub use mcts::{mcts_search, MctsParams};
pub use verify::{verify_no_regression, VerificationReport};

/// Resource bounds of one search invocation. A budget with neither bound is
/// explicitly unbounded.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_whatif_calls: Option<u64>,
    #[serde(skip)]
    pub wall_clock: Option<Duration>,
}

impl SearchBudget {
    pub fn unbounded() -> Self {
        SearchBudget::default()
    }

    pub fn with_calls(calls: u64) -> Self {
        SearchBudget {
            max_whatif_calls: Some(calls),
            wall_clock: None,
        }
    }
}

/// One point of the anytime best-so-far curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub whatif_calls: u64,
    pub best_improvement: f64,
}

/// Outcome of a search strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub strategy: String,
    pub configuration: Configuration,
    /// Estimated total workload cost under the empty configuration.
    pub baseline_cost: f64,
    /// Estimated total workload cost under the recommended configuration.
    pub final_cost: f64,
    /// Per-query (before, after) costs.
    pub per_query: BTreeMap<QueryId, (f64, f64)>,
    pub whatif_calls_used: u64,
    /// (baseline - final) / baseline, clamped into [0, 1].
    pub improvement: f64,
    pub trace: Vec<TracePoint>,
    pub budget_exhausted: bool,
    pub configs_evaluated: u64,
    /// Costings served by learned models / engine cache during the search.
    pub model_served: u64,
    pub cache_served: u64,
}

/// Cost provider used by every strategy: either raw what-if calls or the
/// learned-model front end.
pub trait Coster {
    fn cost(&self, q: &LogicalQuery, c: &Configuration) -> Result<(f64, CostSource)>;
    fn engine(&self) -> &dyn EngineAdapter;
}

/// Straight what-if costing.
pub struct WhatIfCoster<'a> {
    pub engine: &'a dyn EngineAdapter,
}

impl Coster for WhatIfCoster<'_> {
    fn cost(&self, q: &LogicalQuery, c: &Configuration) -> Result<(f64, CostSource)> {
        let res = self.engine.optimize(q, c)?;
        Ok((
            res.estimated_cost,
            if res.from_cache {
                CostSource::Cache
            } else {
                CostSource::WhatIf
            },
        ))
    }

    fn engine(&self) -> &dyn EngineAdapter {
        self.engine
    }
}

/// Model-first costing: templates with a good-enough model answer without
/// optimizer calls; everything else falls through to what-if.
pub struct ModelCoster<'a> {
    pub engine: &'a dyn EngineAdapter,
    pub models: &'a CostModelSet,
}

impl Coster for ModelCoster<'_> {
    fn cost(&self, q: &LogicalQuery, c: &Configuration) -> Result<(f64, CostSource)> {
        cost_or_predict(q, c, self.models, self.engine)
    }

    fn engine(&self) -> &dyn EngineAdapter {
        self.engine
    }
}

/// Total workload cost under a configuration plus the per-query breakdown.
#[derive(Debug, Clone)]
pub struct WorkloadCost {
    pub total: f64,
    pub per_query: BTreeMap<QueryId, f64>,
    pub model_served: u64,
    pub cache_served: u64,
}

/// Weighted total workload cost: sum over queries of weight x cost(q, C).
/// Relevant-subset caching in the engine makes queries untouched by `c`
/// cache hits.
pub fn workload_cost(w: &Workload, c: &Configuration, coster: &dyn Coster) -> Result<WorkloadCost> {
    let mut total = 0.0;
    let mut per_query = BTreeMap::new();
    let mut model_served = 0;
    let mut cache_served = 0;
    for q in &w.queries {
        let (cost, source) = coster.cost(q, c)?;
        match source {
            CostSource::Model => model_served += 1,
            CostSource::Cache => cache_served += 1,
            CostSource::WhatIf => {}
        }
        total += q.weight * cost;
        per_query.insert(q.id.clone(), cost);
    }
    Ok(WorkloadCost {
        total,
        per_query,
        model_served,
        cache_served,
    })
}

/// Shared stop-condition bookkeeping for strategies.
pub(crate) struct SearchClock {
    start: Instant,
    wall_clock: Option<Duration>,
}

impl SearchClock {
    pub(crate) fn new(budget: &SearchBudget) -> Self {
        SearchClock {
            start: Instant::now(),
            wall_clock: budget.wall_clock,
        }
    }

    pub(crate) fn expired(&self) -> bool {
        match self.wall_clock {
            Some(limit) => self.start.elapsed() >= limit,
            None => false,
        }
    }
}

/// True when adding `index` keeps the configuration within the storage budget.
pub(crate) fn fits_storage(
    current: &Configuration,
    index: &IndexDef,
    constraints: &TuningConstraints,
    engine: &dyn EngineAdapter,
) -> Result<bool> {
    let Some(budget) = constraints.storage_budget_bytes else {
        return Ok(true);
    };
    let with = current.with(index.clone());
    Ok(with.total_size_bytes(engine.catalog())? <= budget)
}

pub(crate) fn config_satisfies(
    c: &Configuration,
    constraints: &TuningConstraints,
    engine: &dyn EngineAdapter,
) -> Result<bool> {
    if c.len() > constraints.max_indexes {
        return Ok(false);
    }
    if let Some(budget) = constraints.storage_budget_bytes {
        if c.total_size_bytes(engine.catalog())? > budget {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(crate) fn improvement_fraction(baseline: f64, cost: f64) -> f64 {
    if baseline <= 0.0 {
        return 0.0;
    }
    ((baseline - cost) / baseline).clamp(0.0, 1.0)
}

/// Assembles a [`SearchResult`], recosting per-query numbers through the
/// coster. Normally every value is already cached; if even the baseline does
/// not fit the budget, a degenerate empty-configuration result is returned
/// rather than exceeding the budget.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_result(
    strategy: &str,
    w: &Workload,
    configuration: Configuration,
    coster: &dyn Coster,
    calls_at_start: u64,
    trace: Vec<TracePoint>,
    budget_exhausted: bool,
    configs_evaluated: u64,
) -> Result<SearchResult> {
    let degenerate = |configuration: Configuration| SearchResult {
        strategy: strategy.to_string(),
        configuration,
        baseline_cost: 0.0,
        final_cost: 0.0,
        per_query: BTreeMap::new(),
        whatif_calls_used: coster.engine().accounting().whatif_calls - calls_at_start,
        improvement: 0.0,
        trace: trace.clone(),
        budget_exhausted: true,
        configs_evaluated,
        model_served: 0,
        cache_served: 0,
    };
    let Some(baseline) = absorb_budget_error(workload_cost(w, &Configuration::empty(), coster))?
    else {
        return Ok(degenerate(Configuration::empty()));
    };
    let Some(fin) = absorb_budget_error(workload_cost(w, &configuration, coster))? else {
        return Ok(degenerate(Configuration::empty()));
    };
    let per_query: BTreeMap<QueryId, (f64, f64)> = baseline
        .per_query
        .iter()
        .map(|(id, b)| (id.clone(), (*b, fin.per_query[id])))
        .collect();
    let improvement = improvement_fraction(baseline.total, fin.total);
    Ok(SearchResult {
        strategy: strategy.to_string(),
        configuration,
        baseline_cost: baseline.total,
        final_cost: fin.total,
        per_query,
        whatif_calls_used: coster.engine().accounting().whatif_calls - calls_at_start,
        improvement,
        trace,
        budget_exhausted,
        configs_evaluated,
        model_served: fin.model_served,
        cache_served: fin.cache_served,
    })
}

/// Maps a budget-exhaustion error to a normal stop, propagating others.
pub(crate) fn absorb_budget_error<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::BudgetExhausted) => Ok(None),
        Err(e) => Err(e),
    }
}
