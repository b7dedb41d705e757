//! The common system-interaction contract every engine adapter implements,
//! plus the built-in deterministic virtual engine: what-if optimization over
//! hypothetical indexes, simulated execution, statistics, capability flags,
//! and exact what-if call accounting.
//!
//! Cost units are abstract; only ratios between costs are meaningful.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{hash_to_standard_normal, Fnv64};
use crate::ir::{
    Catalog, Configuration, IndexDef, IndexId, JoinMethod, LogicalQuery, PlanDescriptor, PredOp,
    QueryId, TableAccess, TableStats,
};

/// Feature flags an adapter reports; tuning plans adapt to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCapabilities {
    pub supports_whatif: bool,
    pub supports_execution: bool,
    pub supports_plan_descriptor: bool,
    pub supports_hypothetical_index: bool,
}

/// Result of a what-if optimizer call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    /// Estimated cost in abstract units; always > 0.
    pub estimated_cost: f64,
    /// Plan description; absent on adapters without plan-descriptor support.
    pub plan: Option<PlanDescriptor>,
    pub from_cache: bool,
}

/// Monotone counters of engine interactions during a tuning session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallAccounting {
    pub whatif_calls: u64,
    pub cache_hits: u64,
    pub executions: u64,
}

/// Handle returned by hypothetical index creation; the canonical index id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexHandle(pub IndexId);

/// Common system-interaction APIs: what-if optimization, hypothetical index
/// creation, simulated execution, and statistics.
pub trait EngineAdapter: Send + Sync {
    fn capabilities(&self) -> EngineCapabilities;

    fn get_stats(&self, table: &str) -> Result<&TableStats>;

    fn catalog(&self) -> &Catalog;

    /// Registers a hypothetical index for later optimize calls; idempotent
    /// per canonical id.
    fn create_hypothetical_index(&self, index: &IndexDef) -> Result<IndexHandle>;

    /// Costs `q` as if all indexes in `c` existed, without building them.
    fn optimize(&self, q: &LogicalQuery, c: &Configuration) -> Result<WhatIfResult>;

    /// Simulated execution: the estimated cost perturbed by deterministic
    /// plan-shape-keyed noise.
    fn execute(&self, q: &LogicalQuery, c: &Configuration, seed: u64) -> Result<f64>;

    fn accounting(&self) -> CallAccounting;

    /// Replaces the armed what-if call allowance. `None` disarms.
    fn set_whatif_allowance(&self, remaining: Option<u64>);

    fn whatif_allowance(&self) -> Option<u64>;
}

/// Cost-model constants of the virtual engine. Fixed; never tuned per test.
pub mod cost_constants {
    /// Per-row fetch penalty applied to non-covering seeks, and the per-probe
    /// lookup cost of an index nested-loop join.
    pub const LOOKUP_PENALTY: f64 = 2.0;
    /// Default lognormal noise scale of simulated execution.
    pub const DEFAULT_EXECUTION_SIGMA: f64 = 0.25;
}

/// Deterministic in-process engine implementing the adapter contract.
pub struct VirtualEngine {
    catalog: Catalog,
    sigma: f64,
    registered: Mutex<BTreeMap<IndexId, IndexDef>>,
    cache: Mutex<BTreeMap<(QueryId, String), WhatIfResult>>,
    whatif_calls: AtomicU64,
    cache_hits: AtomicU64,
    executions: AtomicU64,
    allowance: Mutex<Option<u64>>,
    capabilities: EngineCapabilities,
}

impl VirtualEngine {
    pub fn new(catalog: Catalog) -> Self {
        VirtualEngine {
            catalog,
            sigma: cost_constants::DEFAULT_EXECUTION_SIGMA,
            registered: Mutex::new(BTreeMap::new()),
            cache: Mutex::new(BTreeMap::new()),
            whatif_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            executions: AtomicU64::new(0),
            allowance: Mutex::new(None),
            capabilities: EngineCapabilities {
                supports_whatif: true,
                supports_execution: true,
                supports_plan_descriptor: true,
                supports_hypothetical_index: true,
            },
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Cost of one access alternative: `None` marks inapplicable.
    /// Returns (access cost, seek selectivity product, access descriptor,
    /// ordered key suffix available for sort elimination).
    fn access_alternatives(
        &self,
        q: &LogicalQuery,
        c: &Configuration,
        table: &str,
    ) -> Result<Vec<AccessAlt>> {
        let stats = self.catalog.stats(table)?;
        let rows = stats.rows as f64;
        let referenced = q.referenced_columns(table);
        let mut alts = vec![AccessAlt {
            cost: rows,
            access: TableAccess::FullScan,
            ordered_suffix: Vec::new(),
        }];
        for idx in c.on_table(table) {
            idx.validate_against(stats)?;
            let m = match_prefix(q, idx);
            let covering = referenced
                .iter()
                .all(|col| idx.key_columns.contains(col) || idx.included_columns.contains(col));
            let mut cost = rows.log2() + m.selectivity * rows;
            if !covering {
                cost += cost_constants::LOOKUP_PENALTY * m.selectivity * rows;
            }
            // Key columns immediately after the matched equality prefix carry
            // the index order usable for sort elimination.
            let ordered_suffix: Vec<String> = idx.key_columns[m.eq_len..].to_vec();
            alts.push(AccessAlt {
                cost,
                access: TableAccess::IndexSeek {
                    index_id: idx.canonical_id(),
                    matched_prefix_len: m.matched_len,
                    covering,
                },
                ordered_suffix,
            });
        }
        Ok(alts)
    }

    fn charge_whatif_call(&self) -> Result<()> {
        let mut allowance = self.allowance.lock().unwrap();
        if let Some(rem) = allowance.as_mut() {
            if *rem == 0 {
                return Err(Error::BudgetExhausted);
            }
            *rem -= 1;
        }
        self.whatif_calls.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn plan_query(&self, q: &LogicalQuery, c: &Configuration) -> Result<(f64, PlanDescriptor)> {
        let sort_cols = q.sort_columns();
        match q.tables.len() {
            1 => {
                let table = &q.tables[0];
                let stats = self.catalog.stats(table)?;
                let n_out = stats.rows as f64 * q.selectivity_product(table);
                let sort_cost = sort_penalty(n_out);
                let mut best: Option<(f64, PlanDescriptor)> = None;
                for alt in self.access_alternatives(q, c, table)? {
                    let eliminated = !sort_cols.is_empty()
                        && provides_order(&alt.ordered_suffix, sort_cols, table);
                    let total = if sort_cols.is_empty() || eliminated {
                        alt.cost
                    } else {
                        alt.cost + sort_cost
                    };
                    let plan = PlanDescriptor::new(
                        BTreeMap::from([(table.clone(), alt.access)]),
                        eliminated,
                        None,
                    );
                    if best.as_ref().map_or(true, |(b, _)| total < *b) {
                        best = Some((total, plan));
                    }
                }
                Ok(best.expect("full scan alternative always exists"))
            }
            2 => self.plan_join(q, c),
            n => Err(Error::Schema(format!(
                "queries over {n} tables are not supported"
            ))),
        }
    }

    fn plan_join(&self, q: &LogicalQuery, c: &Configuration) -> Result<(f64, PlanDescriptor)> {
        let (ta, tb) = (&q.tables[0], &q.tables[1]);
        let (sa, sb) = (self.catalog.stats(ta)?, self.catalog.stats(tb)?);
        let (join_a, join_b) = match &q.join_pred {
            Some((a, b)) => (a, b),
            None => {
                return Err(Error::Schema(format!(
                    "query '{}' reads two tables but has no join predicate",
                    q.id
                )))
            }
        };
        let n_a = sa.rows as f64 * q.selectivity_product(ta);
        let n_b = sb.rows as f64 * q.selectivity_product(tb);
        let d_a = sa.column(&join_a.column)?.distinct_count as f64;
        let d_b = sb.column(&join_b.column)?.distinct_count as f64;
        let n_join = n_a * n_b / d_a.max(d_b).max(1.0);
        let sort_cols = q.sort_columns();
        let sort_cost = sort_penalty(n_join);

        let alts_a = self.access_alternatives(q, c, ta)?;
        let alts_b = self.access_alternatives(q, c, tb)?;

        // Probe index for an index nested-loop join: any configuration index
        // on the inner table led by the join column; smallest id wins.
        fn probe_index<'c>(
            c: &'c Configuration,
            inner: &str,
            join_col: &str,
        ) -> Option<&'c IndexDef> {
            c.on_table(inner)
                .filter(|i| i.key_columns.first().map(String::as_str) == Some(join_col))
                .min_by_key(|i| i.canonical_id())
        }

        let mut best: Option<(f64, PlanDescriptor)> = None;
        let consider =
            |total: f64, plan: PlanDescriptor, best: &mut Option<(f64, PlanDescriptor)>| {
                if best.as_ref().map_or(true, |(b, _)| total < *b) {
                    *best = Some((total, plan));
                }
            };

        // Hash join: both inputs scanned/seeked independently; order destroyed.
        for aa in &alts_a {
            for ab in &alts_b {
                let mut total = aa.cost + ab.cost + n_a + n_b;
                if !sort_cols.is_empty() {
                    total += sort_cost;
                }
                let plan = PlanDescriptor::new(
                    BTreeMap::from([
                        (ta.clone(), aa.access.clone()),
                        (tb.clone(), ab.access.clone()),
                    ]),
                    false,
                    Some(JoinMethod::Hash),
                );
                consider(total, plan, &mut best);
            }
        }

        // Index nested-loop joins: output order follows the outer access.
        let sides = [
            (&alts_a, ta, n_a, tb, sb, &join_b.column),
            (&alts_b, tb, n_b, ta, sa, &join_a.column),
        ];
        for (outer_alts, outer_table, outer_rows_out, inner_table, inner_stats, inner_join_col) in
            sides
        {
            let Some(pidx) = probe_index(c, inner_table, inner_join_col) else {
                continue;
            };
            let inner_ref = q.referenced_columns(inner_table);
            let covering = inner_ref
                .iter()
                .all(|col| pidx.key_columns.contains(col) || pidx.included_columns.contains(col));
            let probe_cost = outer_rows_out
                * ((inner_stats.rows as f64).log2() + cost_constants::LOOKUP_PENALTY);
            for oa in outer_alts.iter() {
                let eliminated = !sort_cols.is_empty()
                    && provides_order(&oa.ordered_suffix, sort_cols, outer_table);
                let mut total = oa.cost + probe_cost;
                if !sort_cols.is_empty() && !eliminated {
                    total += sort_cost;
                }
                let plan = PlanDescriptor::new(
                    BTreeMap::from([
                        (outer_table.clone(), oa.access.clone()),
                        (
                            inner_table.clone(),
                            TableAccess::IndexSeek {
                                index_id: pidx.canonical_id(),
                                matched_prefix_len: 1,
                                covering,
                            },
                        ),
                    ]),
                    eliminated,
                    Some(JoinMethod::IndexNestedLoop),
                );
                consider(total, plan, &mut best);
            }
        }

        Ok(best.expect("hash join over full scans always exists"))
    }
}

struct AccessAlt {
    cost: f64,
    access: TableAccess,
    /// Key columns from the matched equality prefix onward.
    ordered_suffix: Vec<String>,
}

pub struct PrefixMatch {
    /// Selectivity product of the matched prefix (eq columns, then at most
    /// one range column).
    pub selectivity: f64,
    /// Number of equality-matched leading key columns.
    pub eq_len: usize,
    /// Total matched prefix length including a trailing range column.
    pub matched_len: usize,
}

/// Longest key prefix of `idx` matched by `q`'s equality predicates, times at
/// most one range predicate on the following key column.
pub fn match_prefix(q: &LogicalQuery, idx: &IndexDef) -> PrefixMatch {
    let mut selectivity = 1.0;
    let mut eq_len = 0;
    for key in &idx.key_columns {
        let eq = q
            .predicates
            .iter()
            .find(|p| p.op == PredOp::Eq && p.column.table == idx.table && &p.column.column == key);
        match eq {
            Some(p) => {
                selectivity *= p.selectivity;
                eq_len += 1;
            }
            None => break,
        }
    }
    let mut matched_len = eq_len;
    if let Some(next) = idx.key_columns.get(eq_len) {
        if let Some(p) = q.predicates.iter().find(|p| {
            p.op == PredOp::Range && p.column.table == idx.table && &p.column.column == next
        }) {
            selectivity *= p.selectivity;
            matched_len += 1;
        }
    }
    PrefixMatch {
        selectivity,
        eq_len,
        matched_len,
    }
}

/// True when the access's ordered key suffix starts with exactly the sort
/// columns (all of which must live on `table`).
fn provides_order(
    ordered_suffix: &[String],
    sort_cols: &[crate::ir::ColumnRef],
    table: &str,
) -> bool {
    if sort_cols.is_empty() || sort_cols.iter().any(|c| c.table != table) {
        return false;
    }
    if ordered_suffix.len() < sort_cols.len() {
        return false;
    }
    sort_cols
        .iter()
        .zip(ordered_suffix.iter())
        .all(|(want, have)| &want.column == have)
}

fn sort_penalty(n_out: f64) -> f64 {
    n_out * n_out.max(2.0).log2()
}

/// True when the index's key covers plus includes every column `q` touches
/// on the index's table.
pub fn index_covers(q: &LogicalQuery, idx: &IndexDef) -> bool {
    q.referenced_columns(&idx.table)
        .iter()
        .all(|col| idx.key_columns.contains(col) || idx.included_columns.contains(col))
}

/// True when a seek on `idx` would satisfy the query's sort requirement:
/// the sort columns form a contiguous run of the key immediately after the
/// matched equality prefix.
pub fn index_provides_sort_order(q: &LogicalQuery, idx: &IndexDef) -> bool {
    let sort_cols = q.sort_columns();
    if sort_cols.is_empty() {
        return false;
    }
    let m = match_prefix(q, idx);
    provides_order(&idx.key_columns[m.eq_len..], sort_cols, &idx.table)
}

impl EngineAdapter for VirtualEngine {
    fn capabilities(&self) -> EngineCapabilities {
        self.capabilities
    }

    fn get_stats(&self, table: &str) -> Result<&TableStats> {
        self.catalog.stats(table)
    }

    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn create_hypothetical_index(&self, index: &IndexDef) -> Result<IndexHandle> {
        let stats = self.catalog.stats(&index.table)?;
        index.validate_against(stats)?;
        let id = index.canonical_id();
        self.registered
            .lock()
            .unwrap()
            .entry(id.clone())
            .or_insert_with(|| index.clone());
        Ok(IndexHandle(id))
    }

    fn optimize(&self, q: &LogicalQuery, c: &Configuration) -> Result<WhatIfResult> {
        let restricted = c.restricted_to(&q.tables);
        let key = (q.id.clone(), restricted.signature());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            let mut res = hit.clone();
            res.from_cache = true;
            return Ok(res);
        }
        // Validate before charging so schema errors do not consume budget.
        for t in &q.tables {
            self.catalog.stats(t)?;
        }
        self.charge_whatif_call()?;
        let (cost, plan) = self.plan_query(q, &restricted)?;
        let result = WhatIfResult {
            estimated_cost: cost,
            plan: Some(plan),
            from_cache: false,
        };
        self.cache.lock().unwrap().insert(key, result.clone());
        Ok(result)
    }

    fn execute(&self, q: &LogicalQuery, c: &Configuration, seed: u64) -> Result<f64> {
        if !self.capabilities.supports_execution {
            return Err(Error::Capability("execution".into()));
        }
        let opt = self.optimize(q, c)?;
        let plan = opt
            .plan
            .as_ref()
            .expect("virtual engine always produces plans");
        self.executions.fetch_add(1, Ordering::SeqCst);
        let h = Fnv64::new()
            .write_u64(seed)
            .write_str(&q.template_id.0)
            .write_str(&plan.signature)
            .finish();
        let z = hash_to_standard_normal(h);
        Ok(opt.estimated_cost * (self.sigma * z).exp())
    }

    fn accounting(&self) -> CallAccounting {
        CallAccounting {
            whatif_calls: self.whatif_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            executions: self.executions.load(Ordering::SeqCst),
        }
    }

    fn set_whatif_allowance(&self, remaining: Option<u64>) {
        *self.allowance.lock().unwrap() = remaining;
    }

    fn whatif_allowance(&self) -> Option<u64> {
        *self.allowance.lock().unwrap()
    }
}

/// Test adapter reporting reduced capabilities (no plan descriptors, no
/// execution) so planner adaptivity can be exercised. What-if costs come
/// from an inner virtual engine with the plan stripped.
pub struct DegradedEngine {
    inner: VirtualEngine,
}

impl DegradedEngine {
    pub fn new(catalog: Catalog) -> Self {
        DegradedEngine {
            inner: VirtualEngine::new(catalog),
        }
    }
}

impl EngineAdapter for DegradedEngine {
    fn capabilities(&self) -> EngineCapabilities {
        EngineCapabilities {
            supports_whatif: true,
            supports_execution: false,
            supports_plan_descriptor: false,
            supports_hypothetical_index: true,
        }
    }

    fn get_stats(&self, table: &str) -> Result<&TableStats> {
        self.inner.get_stats(table)
    }

    fn catalog(&self) -> &Catalog {
        self.inner.catalog()
    }

    fn create_hypothetical_index(&self, index: &IndexDef) -> Result<IndexHandle> {
        self.inner.create_hypothetical_index(index)
    }

    fn optimize(&self, q: &LogicalQuery, c: &Configuration) -> Result<WhatIfResult> {
        let mut res = self.inner.optimize(q, c)?;
        res.plan = None;
        Ok(res)
    }

    fn execute(&self, _q: &LogicalQuery, _c: &Configuration, _seed: u64) -> Result<f64> {
        Err(Error::Capability("execution".into()))
    }

    fn accounting(&self) -> CallAccounting {
        self.inner.accounting()
    }

    fn set_whatif_allowance(&self, remaining: Option<u64>) {
        self.inner.set_whatif_allowance(remaining)
    }

    fn whatif_allowance(&self) -> Option<u64> {
        self.inner.whatif_allowance()
    }
}

/// Scoped what-if budget: arms `limit` additional calls on the adapter and
/// restores the surrounding allowance (minus calls used) on drop.
pub struct BudgetScope<'a> {
    adapter: &'a dyn EngineAdapter,
    outer: Option<u64>,
    armed: Option<u64>,
}

impl<'a> BudgetScope<'a> {
    pub fn arm(adapter: &'a dyn EngineAdapter, limit: Option<u64>) -> Self {
        let outer = adapter.whatif_allowance();
        let armed = match (outer, limit) {
            (Some(o), Some(l)) => Some(o.min(l)),
            (Some(o), None) => Some(o),
            (None, Some(l)) => Some(l),
            (None, None) => None,
        };
        adapter.set_whatif_allowance(armed);
        BudgetScope {
            adapter,
            outer,
            armed,
        }
    }
}

impl Drop for BudgetScope<'_> {
    fn drop(&mut self) {
        let rem = self.adapter.whatif_allowance();
        let used = match (self.armed, rem) {
            (Some(a), Some(r)) => a - r,
            _ => 0,
        };
        self.adapter
            .set_whatif_allowance(self.outer.map(|o| o.saturating_sub(used)));
    }
}
