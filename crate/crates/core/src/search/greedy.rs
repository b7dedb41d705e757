//! Greedy configuration search and its two classic variants: AutoAdmin
//! greedy (per-query best subsets seed a workload-level greedy) and
//! two-phase greedy (per-query mini-greedy seeds the workload-level greedy).

use std::collections::BTreeSet;

use crate::engine::BudgetScope;
use crate::error::Result;
use crate::ir::{Configuration, IndexId, LogicalQuery, TuningConstraints, Workload};

use super::{
    absorb_budget_error, build_result, fits_storage, improvement_fraction, workload_cost, Coster,
    SearchBudget, SearchClock, SearchResult, TracePoint,
};
use crate::candidates::CandidateSet;

/// Classic greedy search: repeatedly add the candidate whose addition lowers
/// the estimated workload cost the most, stopping at the index limit, at an
/// improvement below epsilon, or on budget exhaustion (returning the best
/// configuration found so far). Ties break on canonical index id.
pub fn greedy_search(
    w: &Workload,
    candidates: &CandidateSet,
    constraints: &TuningConstraints,
    budget: &SearchBudget,
    coster: &dyn Coster,
) -> Result<SearchResult> {
    let engine = coster.engine();
    let calls_at_start = engine.accounting().whatif_calls;
    let _scope = BudgetScope::arm(engine, budget.max_whatif_calls);
    let clock = SearchClock::new(budget);

    let mut current = Configuration::empty();
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut configs_evaluated = 0u64;
    let mut exhausted = false;

    // Baseline and per-round accept decisions always use true what-if costs.
    let verifier = super::WhatIfCoster { engine };
    let baseline = match absorb_budget_error(workload_cost(w, &current, &verifier))? {
        Some(c) => c.total,
        None => {
            // Cannot even cost the baseline inside the budget.
            return build_result("greedy", w, current, coster, calls_at_start, trace, true, 0);
        }
    };
    let mut current_total = baseline;
    let push_trace = |trace: &mut Vec<TracePoint>, engine_calls: u64, imp: f64| {
        let best = trace
            .last()
            .map(|t: &TracePoint| t.best_improvement)
            .unwrap_or(0.0);
        trace.push(TracePoint {
            whatif_calls: engine_calls - calls_at_start,
            best_improvement: imp.max(best),
        });
    };
    push_trace(&mut trace, engine.accounting().whatif_calls, 0.0);

    // Each round's winner is re-costed through raw what-if before being
    // committed. Under a what-if coster every verification is a cache hit
    // and the accept decision is unchanged; under a model coster it stops
    // prediction error from committing indexes that do not actually help.
    const VERIFY_TRIES: usize = 8;

    let mut remaining: Vec<usize> = (0..candidates.entries.len()).collect();
    'rounds: while current.len() < constraints.max_indexes && !remaining.is_empty() {
        if clock.expired() {
            exhausted = true;
            break;
        }
        let mut scored: Vec<(usize, f64)> = Vec::new();
        for &slot in &remaining {
            let entry = &candidates.entries[slot];
            if !fits_storage(&current, &entry.index, constraints, engine)? {
                continue;
            }
            let trial = current.with(entry.index.clone());
            match absorb_budget_error(workload_cost(w, &trial, coster))? {
                Some(cost) => {
                    configs_evaluated += 1;
                    scored.push((slot, cost.total));
                }
                None => {
                    exhausted = true;
                    break 'rounds;
                }
            }
        }
        if scored.is_empty() {
            break;
        }
        // Entries are in canonical-id order; a stable sort keeps the
        // smallest id first among ties.
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

        let mut accepted = None;
        for &(slot, _) in scored.iter().take(VERIFY_TRIES) {
            let trial = current.with(candidates.entries[slot].index.clone());
            let verified = match absorb_budget_error(workload_cost(w, &trial, &verifier))? {
                Some(cost) => cost.total,
                None => {
                    exhausted = true;
                    break 'rounds;
                }
            };
            let relative_gain = (current_total - verified) / current_total.max(f64::MIN_POSITIVE);
            if relative_gain >= constraints.min_improvement_epsilon {
                accepted = Some((slot, verified));
                break;
            }
        }
        let Some((slot, verified_total)) = accepted else {
            break;
        };
        current.insert(candidates.entries[slot].index.clone());
        remaining.retain(|&s| s != slot);
        current_total = verified_total;
        push_trace(
            &mut trace,
            engine.accounting().whatif_calls,
            improvement_fraction(baseline, current_total),
        );
    }

    build_result(
        "greedy",
        w,
        current,
        coster,
        calls_at_start,
        trace,
        exhausted,
        configs_evaluated,
    )
}

fn single_query_workload(q: &LogicalQuery) -> Workload {
    Workload {
        queries: vec![q.clone()],
        baseline_costs: None,
    }
}

fn candidate_subset(candidates: &CandidateSet, keep: &BTreeSet<IndexId>) -> CandidateSet {
    CandidateSet {
        entries: candidates
            .entries
            .iter()
            .filter(|e| keep.contains(&e.index.canonical_id()))
            .cloned()
            .collect(),
    }
}

/// Advances `combo` to the next m-combination of 0..n in lexicographic
/// order; false when exhausted.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let m = combo.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if combo[i] < i + n - m {
            combo[i] += 1;
            for j in i + 1..m {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// AutoAdmin greedy: phase A picks each query's best `m`-subset of its own
/// candidates by per-query what-if; phase B runs the workload-level greedy
/// over the union of the winners.
pub fn autoadmin_search(
    w: &Workload,
    candidates: &CandidateSet,
    constraints: &TuningConstraints,
    budget: &SearchBudget,
    coster: &dyn Coster,
    m: usize,
) -> Result<SearchResult> {
    let engine = coster.engine();
    let calls_at_start = engine.accounting().whatif_calls;
    let mut winners: BTreeSet<IndexId> = BTreeSet::new();
    let mut exhausted = false;
    {
        let _scope = BudgetScope::arm(engine, budget.max_whatif_calls);
        'queries: for q in &w.queries {
            let own: Vec<_> = candidates.for_query(&q.id);
            if own.is_empty() {
                continue;
            }
            let m_eff = m.max(1).min(own.len());
            // Enumerate m-subsets in id order; first strict minimum wins.
            let mut best: Option<(Vec<usize>, f64)> = None;
            let mut combo: Vec<usize> = (0..m_eff).collect();
            loop {
                let config =
                    Configuration::from_indexes(combo.iter().map(|&i| own[i].index.clone()));
                match absorb_budget_error(coster.cost(q, &config))? {
                    Some((cost, _)) => {
                        if best.as_ref().map_or(true, |(_, b)| cost < *b) {
                            best = Some((combo.clone(), cost));
                        }
                    }
                    None => {
                        exhausted = true;
                        break 'queries;
                    }
                }
                if !next_combination(&mut combo, own.len()) {
                    break;
                }
            }
            if let Some((combo, _)) = best {
                for i in combo {
                    winners.insert(own[i].index.canonical_id());
                }
            }
        }
    }

    let remaining_budget = budget
        .max_whatif_calls
        .map(|b| b.saturating_sub(engine.accounting().whatif_calls - calls_at_start));
    let phase_b_budget = SearchBudget {
        max_whatif_calls: remaining_budget,
        wall_clock: budget.wall_clock,
    };
    let pool = candidate_subset(candidates, &winners);
    let mut result = greedy_search(w, &pool, constraints, &phase_b_budget, coster)?;
    result.strategy = "autoadmin".into();
    result.whatif_calls_used = engine.accounting().whatif_calls - calls_at_start;
    result.budget_exhausted |= exhausted;
    Ok(result)
}

/// Two-phase greedy: phase 1 runs a per-query greedy up to `p` indexes
/// against each query alone; phase 2 runs the workload-level greedy over the
/// union of the per-query winners.
pub fn twophase_search(
    w: &Workload,
    candidates: &CandidateSet,
    constraints: &TuningConstraints,
    budget: &SearchBudget,
    coster: &dyn Coster,
    p: usize,
) -> Result<SearchResult> {
    let engine = coster.engine();
    let calls_at_start = engine.accounting().whatif_calls;
    let mut winners: BTreeSet<IndexId> = BTreeSet::new();
    let mut exhausted = false;
    {
        let _scope = BudgetScope::arm(engine, budget.max_whatif_calls);
        let per_query_constraints = TuningConstraints {
            max_indexes: p.max(1),
            ..constraints.clone()
        };
        for q in &w.queries {
            let own_ids: BTreeSet<IndexId> = candidates
                .for_query(&q.id)
                .iter()
                .map(|e| e.index.canonical_id())
                .collect();
            if own_ids.is_empty() {
                continue;
            }
            let own = candidate_subset(candidates, &own_ids);
            let single = single_query_workload(q);
            let inner = greedy_search(
                &single,
                &own,
                &per_query_constraints,
                &SearchBudget::unbounded(),
                coster,
            )?;
            if inner.budget_exhausted {
                exhausted = true;
                break;
            }
            for id in inner.configuration.ids() {
                winners.insert(id.clone());
            }
        }
    }

    let remaining_budget = budget
        .max_whatif_calls
        .map(|b| b.saturating_sub(engine.accounting().whatif_calls - calls_at_start));
    let phase_b_budget = SearchBudget {
        max_whatif_calls: remaining_budget,
        wall_clock: budget.wall_clock,
    };
    let pool = candidate_subset(candidates, &winners);
    let mut result = greedy_search(w, &pool, constraints, &phase_b_budget, coster)?;
    result.strategy = "two-phase".into();
    result.whatif_calls_used = engine.accounting().whatif_calls - calls_at_start;
    result.budget_exhausted |= exhausted;
    Ok(result)
}
