//! Monte Carlo tree search over configurations: UCB1 selection balances
//! exploiting promising configurations against exploring overlooked ones,
//! making the search effective when the what-if budget is far below what
//! greedy needs. Deterministic given the seed.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::BudgetScope;
use crate::error::{Error, Result};
use crate::ir::{Configuration, TuningConstraints, Workload};

use super::{
    absorb_budget_error, build_result, improvement_fraction, workload_cost, Coster, SearchBudget,
    SearchClock, SearchResult, TracePoint,
};
use crate::candidates::CandidateSet;

#[derive(Debug, Clone, Copy)]
pub struct MctsParams {
    pub ucb_c: f64,
    /// Cap on the action fan-out. Rollout diversity dominates result quality
    /// under relevant-subset caching, so the cap sits high; it still bounds
    /// the tree width on very large candidate sets.
    pub branch_cap: usize,
    pub seed: u64,
}

impl Default for MctsParams {
    fn default() -> Self {
        MctsParams {
            ucb_c: std::f64::consts::SQRT_2,
            branch_cap: 192,
            seed: 0,
        }
    }
}

struct Node {
    config: Configuration,
    visits: u64,
    total_reward: f64,
    /// (action, child node) pairs in expansion order.
    children: Vec<(usize, usize)>,
    /// Actions not yet expanded, best-ranked first.
    untried: Vec<usize>,
}

/// Budgeted MCTS search. Requires a what-if call budget — budgeted search is
/// the point. Actions add one of the top-ranked candidates (by per-query
/// best improvement, precomputed within the budget); rollouts extend a
/// configuration with uniformly random remaining actions until the size or
/// storage bound; the reward is the terminal configuration's improvement
/// fraction, memoized per signature. Returns the best configuration ever
/// evaluated that satisfies the constraints.
pub fn mcts_search(
    w: &Workload,
    candidates: &CandidateSet,
    constraints: &TuningConstraints,
    budget: &SearchBudget,
    coster: &dyn Coster,
    params: &MctsParams,
) -> Result<SearchResult> {
    if budget.max_whatif_calls.is_none() {
        return Err(Error::InvalidRequest(
            "MCTS requires a what-if call budget".into(),
        ));
    }
    let engine = coster.engine();
    let calls_at_start = engine.accounting().whatif_calls;
    let _scope = BudgetScope::arm(engine, budget.max_whatif_calls);
    let clock = SearchClock::new(budget);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut trace: Vec<TracePoint> = vec![];
    let mut configs_evaluated = 0u64;
    let mut best_config = Configuration::empty();
    let mut best_improvement = 0.0f64;
    let mut exhausted = false;

    let calls_used = |engine: &dyn crate::engine::EngineAdapter| {
        engine.accounting().whatif_calls - calls_at_start
    };
    trace.push(TracePoint {
        whatif_calls: calls_used(engine),
        best_improvement: 0.0,
    });

    let baseline = match absorb_budget_error(workload_cost(w, &Configuration::empty(), coster))? {
        Some(c) => c,
        None => {
            return build_result(
                "mcts",
                w,
                best_config,
                coster,
                calls_at_start,
                trace,
                true,
                0,
            );
        }
    };

    // Rank candidates by their best single-query relative improvement. Each
    // per-query cost also yields the exact workload cost of the singleton
    // configuration (unaffected queries keep their baseline), seeding the
    // incumbent for free.
    let mut ranked: Vec<(usize, f64)> = Vec::new(); // (entry slot, best per-query ri)
    'ranking: for (slot, entry) in candidates.entries.iter().enumerate() {
        let single = Configuration::from_indexes([entry.index.clone()]);
        let mut best_ri = 0.0f64;
        let mut workload_total = baseline.total;
        for qid in &entry.interested {
            let Some(q) = w.get(qid) else { continue };
            match absorb_budget_error(coster.cost(q, &single))? {
                Some((cost, _)) => {
                    let base = baseline.per_query[qid];
                    best_ri = best_ri.max((base - cost) / base.max(f64::MIN_POSITIVE));
                    workload_total += q.weight * (cost - base);
                }
                None => {
                    exhausted = true;
                    break 'ranking;
                }
            }
        }
        configs_evaluated += 1;
        ranked.push((slot, best_ri));
        if super::config_satisfies(&single, constraints, engine)? {
            let imp = improvement_fraction(baseline.total, workload_total);
            if imp > best_improvement {
                best_improvement = imp;
                best_config = single;
                trace.push(TracePoint {
                    whatif_calls: calls_used(engine),
                    best_improvement,
                });
            }
        }
    }
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then_with(|| {
            candidates.entries[a.0]
                .index
                .canonical_id()
                .cmp(&candidates.entries[b.0].index.canonical_id())
        })
    });
    let actions: Vec<usize> = ranked
        .iter()
        .take(params.branch_cap)
        .map(|(slot, _)| *slot)
        .collect();

    let mut nodes: Vec<Node> = vec![Node {
        config: Configuration::empty(),
        visits: 0,
        total_reward: 0.0,
        children: Vec::new(),
        untried: (0..actions.len()).collect(),
    }];
    let mut reward_memo: BTreeMap<String, f64> = BTreeMap::new();

    // Memoized rollouts cost nothing, so budget exhaustion alone cannot
    // terminate a saturated search space; the iteration cap does.
    let budget_calls = budget.max_whatif_calls.unwrap_or(0);
    let max_iterations = 500 + 40 * budget_calls as usize;
    let mut iterations = 0usize;

    while !exhausted && !actions.is_empty() && iterations < max_iterations {
        iterations += 1;
        if clock.expired() {
            exhausted = true;
            break;
        }
        // Selection.
        let mut path = vec![0usize];
        let mut node_idx = 0usize;
        loop {
            let node = &nodes[node_idx];
            if node.config.len() >= constraints.max_indexes
                || (node.untried.is_empty() && node.children.is_empty())
            {
                break;
            }
            if !node.untried.is_empty() {
                break;
            }
            // UCB1 over children; first maximum wins.
            let ln_n = (node.visits.max(1) as f64).ln();
            let mut best_child: Option<(usize, f64)> = None;
            for &(_, child_idx) in &node.children {
                let child = &nodes[child_idx];
                let mean = child.total_reward / child.visits.max(1) as f64;
                let ucb = mean + params.ucb_c * (ln_n / child.visits.max(1) as f64).sqrt();
                if best_child.map_or(true, |(_, b)| ucb > b) {
                    best_child = Some((child_idx, ucb));
                }
            }
            let Some((child_idx, _)) = best_child else {
                break;
            };
            node_idx = child_idx;
            path.push(node_idx);
        }

        // Expansion of one untried action.
        if nodes[node_idx].config.len() < constraints.max_indexes
            && !nodes[node_idx].untried.is_empty()
        {
            let action = nodes[node_idx].untried.remove(0);
            let entry = &candidates.entries[actions[action]];
            let child_config = nodes[node_idx].config.with(entry.index.clone());
            if super::fits_storage(&nodes[node_idx].config, &entry.index, constraints, engine)? {
                let untried = (0..actions.len())
                    .filter(|&a| {
                        !child_config.contains(&candidates.entries[actions[a]].index.canonical_id())
                    })
                    .collect();
                let child = Node {
                    config: child_config,
                    visits: 0,
                    total_reward: 0.0,
                    children: Vec::new(),
                    untried,
                };
                let child_idx = nodes.len();
                nodes.push(child);
                nodes[node_idx].children.push((action, child_idx));
                node_idx = child_idx;
                path.push(node_idx);
            }
        }

        // Rollout: uniformly random additions until the size/storage bound.
        let mut rollout = nodes[node_idx].config.clone();
        let mut available: Vec<usize> = actions
            .iter()
            .enumerate()
            .filter(|(_, &slot)| !rollout.contains(&candidates.entries[slot].index.canonical_id()))
            .map(|(a, _)| a)
            .collect();
        while rollout.len() < constraints.max_indexes && !available.is_empty() {
            let pick = rng.gen_range(0..available.len());
            let action = available.swap_remove(pick);
            let entry = &candidates.entries[actions[action]];
            if super::fits_storage(&rollout, &entry.index, constraints, engine)? {
                rollout.insert(entry.index.clone());
            }
        }

        // Evaluation, memoized per configuration signature: repeat
        // evaluations are engine cache hits, not fresh calls.
        let sig = rollout.signature();
        let reward = match reward_memo.get(&sig) {
            Some(r) => *r,
            None => match absorb_budget_error(workload_cost(w, &rollout, coster))? {
                Some(cost) => {
                    configs_evaluated += 1;
                    let imp = improvement_fraction(baseline.total, cost.total);
                    reward_memo.insert(sig, imp);
                    if imp > best_improvement
                        && super::config_satisfies(&rollout, constraints, engine)?
                    {
                        best_improvement = imp;
                        best_config = rollout.clone();
                        trace.push(TracePoint {
                            whatif_calls: calls_used(engine),
                            best_improvement,
                        });
                    }
                    imp
                }
                None => {
                    exhausted = true;
                    break;
                }
            },
        };

        // Backpropagation.
        for idx in path {
            nodes[idx].visits += 1;
            nodes[idx].total_reward += reward;
        }
    }

    trace.push(TracePoint {
        whatif_calls: calls_used(engine),
        best_improvement,
    });
    build_result(
        "mcts",
        w,
        best_config,
        coster,
        calls_at_start,
        trace,
        exhausted,
        configs_evaluated,
    )
}
