//! Exhaustive enumeration over all configurations of size <= K: the oracle
//! the heuristics are measured against. Guarded, because the unrestricted
//! problem is intractable.

use crate::error::{Error, Result};
use crate::ir::{Configuration, TuningConstraints, Workload};

use super::{build_result, workload_cost, Coster, SearchResult, TracePoint};
use crate::candidates::CandidateSet;

/// Upper bound on the number of subsets the oracle will scan.
pub const EXHAUSTIVE_GUARD: u64 = 1_000_000;

fn subset_count(n: u64, k: u64) -> u64 {
    // sum_{j<=k} C(n, j), saturating.
    let mut total: u64 = 0;
    let mut c: u64 = 1; // C(n, 0)
    for j in 0..=k.min(n) {
        if j > 0 {
            c = match c.checked_mul(n - j + 1) {
                Some(v) => v / j,
                None => return u64::MAX,
            };
        }
        total = total.saturating_add(c);
    }
    total
}

/// Finds the exact optimum over all candidate subsets of size <= K meeting
/// the storage budget. Ties resolve to the lexicographically smallest id
/// sequence, which the DFS enumeration order provides. What-if budgets do
/// not apply; the guard bounds the scan instead.
pub fn exhaustive_search(
    w: &Workload,
    candidates: &CandidateSet,
    constraints: &TuningConstraints,
    coster: &dyn Coster,
) -> Result<SearchResult> {
    let n = candidates.entries.len() as u64;
    let count = subset_count(n, constraints.max_indexes as u64);
    if count > EXHAUSTIVE_GUARD {
        return Err(Error::Guard(format!(
            "exhaustive search over {count} subsets exceeds the {EXHAUSTIVE_GUARD} guard"
        )));
    }
    let engine = coster.engine();
    let calls_at_start = engine.accounting().whatif_calls;

    let baseline = workload_cost(w, &Configuration::empty(), coster)?.total;
    let mut best_config = Configuration::empty();
    let mut best_total = baseline;
    let mut configs_evaluated = 1u64; // the empty configuration

    // DFS in candidate-id order: prefixes are enumerated before their
    // extensions, giving lexicographic tie-breaking with strict comparison.
    let mut stack: Vec<(usize, Configuration)> = Vec::new();
    for start in (0..candidates.entries.len()).rev() {
        stack.push((start, Configuration::empty()));
    }
    while let Some((slot, base)) = stack.pop() {
        let entry = &candidates.entries[slot];
        let config = base.with(entry.index.clone());
        if let Some(limit) = constraints.storage_budget_bytes {
            // Storage is monotone: prune this branch entirely.
            if config.total_size_bytes(engine.catalog())? > limit {
                continue;
            }
        }
        let total = workload_cost(w, &config, coster)?.total;
        configs_evaluated += 1;
        if total < best_total {
            best_total = total;
            best_config = config.clone();
        }
        if config.len() < constraints.max_indexes {
            for next in ((slot + 1)..candidates.entries.len()).rev() {
                stack.push((next, config.clone()));
            }
        }
    }

    let trace = vec![TracePoint {
        whatif_calls: engine.accounting().whatif_calls - calls_at_start,
        best_improvement: super::improvement_fraction(baseline, best_total),
    }];
    build_result(
        "exhaustive",
        w,
        best_config,
        coster,
        calls_at_start,
        trace,
        false,
        configs_evaluated,
    )
}
