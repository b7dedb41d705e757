//! Workload compression: improvement estimation without optimizer calls,
//! indexing-aware query featurization, cosine similarity, and the linear-time
//! greedy selection of queries worth tuning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Catalog, ClauseRole, LogicalQuery, QueryId, Workload};
use crate::sql::extract_indexable_columns;

/// Sparse feature vector over indexable-column keys (`table.column.role`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatureVector {
    pub weights: BTreeMap<String, f64>,
}

impl QueryFeatureVector {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn dot(&self, other: &QueryFeatureVector) -> f64 {
        // Iterate the smaller map.
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .weights
            .iter()
            .filter_map(|(k, v)| large.weights.get(k).map(|w| v * w))
            .sum()
    }
}

/// Estimated potential improvement of one query due to indexing, using only
/// statistics — zero optimizer calls. Sums, over referenced tables, the
/// query's baseline cost share attributable to the table times the filtered
/// fraction of its rows.
pub fn estimate_improvement(
    q: &LogicalQuery,
    catalog: &Catalog,
    baseline_cost: f64,
) -> Result<f64> {
    let mut total_rows = 0.0;
    for t in &q.tables {
        total_rows += catalog.stats(t)?.rows as f64;
    }
    if total_rows == 0.0 {
        return Ok(0.0);
    }
    let mut improvement = 0.0;
    for t in &q.tables {
        let share = catalog.stats(t)?.rows as f64 / total_rows;
        let s = q.selectivity_product(t);
        improvement += baseline_cost * share * (1.0 - s);
    }
    Ok(improvement)
}

fn role_weight(role: ClauseRole) -> f64 {
    match role {
        ClauseRole::FilterEq => 1.0,
        ClauseRole::Join => 0.8,
        ClauseRole::FilterRange => 0.6,
        ClauseRole::GroupBy | ClauseRole::OrderBy => 0.4,
        ClauseRole::Projected => 0.0,
    }
}

/// Builds the query's feature vector: each indexable column contributes
/// role_weight x log2(table rows) x selectivity factor, where the factor is
/// (1 - predicate selectivity) for filter columns and a fixed 0.5 for roles
/// without a predicate (join, group-by, order-by), which still benefit from
/// index ordering.
pub fn featurize(q: &LogicalQuery, catalog: &Catalog) -> Result<QueryFeatureVector> {
    let mut weights = BTreeMap::new();
    for col in extract_indexable_columns(q) {
        let rows = catalog.stats(&col.table)?.rows as f64;
        let sel_factor = match col.role {
            ClauseRole::FilterEq | ClauseRole::FilterRange => {
                let sel = q
                    .predicates
                    .iter()
                    .find(|p| p.column.table == col.table && p.column.column == col.column)
                    .map(|p| p.selectivity)
                    .unwrap_or(1.0);
                1.0 - sel
            }
            _ => 0.5,
        };
        let w = role_weight(col.role) * rows.log2() * sel_factor;
        if w > 0.0 {
            let key = format!("{}.{}.{}", col.table, col.column, col.role.as_str());
            weights.insert(key, w);
        }
    }
    Ok(QueryFeatureVector { weights })
}

/// Cosine similarity in [0, 1]; zero when either vector is empty.
pub fn similarity(a: &QueryFeatureVector, b: &QueryFeatureVector) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(0.0, 1.0)
}

/// Result of compressing a workload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressedWorkload {
    /// Selected queries with absorbed weights, in selection order.
    pub queries: Vec<LogicalQuery>,
    /// Query ids in selection order.
    pub selected_ids: Vec<QueryId>,
    /// True when k >= |W| made compression a no-op.
    pub no_op: bool,
}

/// Selects `k` queries by decreasing residual improvement score.
///
/// The initial score of a query is its own estimated improvement plus the
/// similarity-weighted improvements of all other queries, computed in linear
/// time through a workload aggregate vector. After each selection the
/// residual score of every unselected query is damped by
/// (1 - similarity to the selected query). Weights of unselected queries are
/// absorbed by their most similar selected query, preserving total weight.
pub fn compress_workload(w: &Workload, catalog: &Catalog, k: usize) -> Result<CompressedWorkload> {
    if k == 0 {
        return Err(Error::InvalidRequest(
            "compression target must be at least 1".into(),
        ));
    }
    let baselines = w
        .baseline_costs
        .as_ref()
        .ok_or_else(|| Error::InvalidRequest("compression requires baseline costs".into()))?;
    if k >= w.len() {
        return Ok(CompressedWorkload {
            queries: w.queries.clone(),
            selected_ids: w.queries.iter().map(|q| q.id.clone()).collect(),
            no_op: true,
        });
    }

    let n = w.len();
    let mut improvements = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for q in &w.queries {
        let base = *baselines.get(&q.id).ok_or_else(|| {
            Error::InvalidRequest(format!("missing baseline cost for query '{}'", q.id))
        })?;
        improvements.push(estimate_improvement(q, catalog, base)?);
        features.push(featurize(q, catalog)?);
    }

    // Normalized vectors and the improvement-weighted aggregate.
    let normalized: Vec<QueryFeatureVector> = features
        .iter()
        .map(|f| {
            let norm = f.norm();
            if norm == 0.0 {
                QueryFeatureVector::default()
            } else {
                QueryFeatureVector {
                    weights: f
                        .weights
                        .iter()
                        .map(|(k, v)| (k.clone(), v / norm))
                        .collect(),
                }
            }
        })
        .collect();
    let mut aggregate = QueryFeatureVector::default();
    for (f, imp) in normalized.iter().zip(improvements.iter()) {
        for (key, v) in &f.weights {
            *aggregate.weights.entry(key.clone()).or_insert(0.0) += v * imp;
        }
    }

    // score(q) = imp(q) + sum_{q' != q} sim(q, q') * imp(q'). For a nonempty
    // vector the self term of <v_q_hat, aggregate> is exactly imp(q), so the
    // inner product already equals the score.
    let mut residual: Vec<f64> = (0..n)
        .map(|i| {
            if normalized[i].is_empty() {
                improvements[i]
            } else {
                normalized[i].dot(&aggregate)
            }
        })
        .collect();

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut picked = vec![false; n];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if picked[i] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    residual[i] > residual[b]
                        || (residual[i] == residual[b] && w.queries[i].id < w.queries[b].id)
                }
            };
            if better {
                best = Some(i);
            }
        }
        let chosen = best.expect("k < |W| guarantees an unselected query");
        picked[chosen] = true;
        selected.push(chosen);
        for i in 0..n {
            if !picked[i] {
                let damp = (1.0 - similarity(&features[chosen], &features[i])).clamp(0.0, 1.0);
                residual[i] *= damp;
            }
        }
    }

    // Weight absorption: every unselected query adds its weight to its
    // argmax-similarity selected query (ties by selected id).
    let mut absorbed: Vec<f64> = selected.iter().map(|&i| w.queries[i].weight).collect();
    for i in 0..n {
        if picked[i] {
            continue;
        }
        let mut best_slot = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (slot, &sel_idx) in selected.iter().enumerate() {
            let sim = similarity(&features[i], &features[sel_idx]);
            let better = sim > best_sim
                || (sim == best_sim && w.queries[sel_idx].id < w.queries[selected[best_slot]].id);
            if better {
                best_sim = sim;
                best_slot = slot;
            }
        }
        absorbed[best_slot] += w.queries[i].weight;
    }

    let queries: Vec<LogicalQuery> = selected
        .iter()
        .zip(absorbed.iter())
        .map(|(&i, &weight)| {
            let mut q = w.queries[i].clone();
            q.weight = weight;
            q
        })
        .collect();
    let selected_ids = queries.iter().map(|q| q.id.clone()).collect();
    Ok(CompressedWorkload {
        queries,
        selected_ids,
        no_op: false,
    })
}

/// Reference quadratic scorer used to validate the aggregate-vector trick.
pub fn pairwise_scores(w: &Workload, catalog: &Catalog) -> Result<Vec<f64>> {
    let baselines = w
        .baseline_costs
        .as_ref()
        .ok_or_else(|| Error::InvalidRequest("baseline costs required".into()))?;
    let mut improvements = Vec::new();
    let mut features = Vec::new();
    for q in &w.queries {
        let base = baselines[&q.id];
        improvements.push(estimate_improvement(q, catalog, base)?);
        features.push(featurize(q, catalog)?);
    }
    let n = w.len();
    let mut scores = vec![0.0; n];
    for i in 0..n {
        scores[i] = improvements[i];
        for j in 0..n {
            if i != j {
                scores[i] += similarity(&features[i], &features[j]) * improvements[j];
            }
        }
    }
    Ok(scores)
}

/// Initial linear-time scores (before any damping), exposed for validation.
pub fn linear_scores(w: &Workload, catalog: &Catalog) -> Result<Vec<f64>> {
    let baselines = w
        .baseline_costs
        .as_ref()
        .ok_or_else(|| Error::InvalidRequest("baseline costs required".into()))?;
    let mut improvements = Vec::new();
    let mut features = Vec::new();
    for q in &w.queries {
        let base = baselines[&q.id];
        improvements.push(estimate_improvement(q, catalog, base)?);
        features.push(featurize(q, catalog)?);
    }
    let normalized: Vec<QueryFeatureVector> = features
        .iter()
        .map(|f| {
            let norm = f.norm();
            if norm == 0.0 {
                QueryFeatureVector::default()
            } else {
                QueryFeatureVector {
                    weights: f
                        .weights
                        .iter()
                        .map(|(k, v)| (k.clone(), v / norm))
                        .collect(),
                }
            }
        })
        .collect();
    let mut aggregate = QueryFeatureVector::default();
    for (f, imp) in normalized.iter().zip(improvements.iter()) {
        for (key, v) in &f.weights {
            *aggregate.weights.entry(key.clone()).or_insert(0.0) += v * imp;
        }
    }
    Ok((0..w.len())
        .map(|i| {
            if normalized[i].is_empty() {
                improvements[i]
            } else {
                normalized[i].dot(&aggregate)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ColumnStats, TableStats};
    use crate::sql::{apply_selectivity_overrides, parse_query};

    fn catalog() -> Catalog {
        let mk = |name: &str, rows: u64| TableStats {
            table: name.into(),
            rows,
            columns: ["a", "b", "c"]
                .iter()
                .map(|n| {
                    (
                        n.to_string(),
                        ColumnStats {
                            width_bytes: 8,
                            distinct_count: rows / 2,
                        },
                    )
                })
                .collect(),
        };
        Catalog::new([mk("t", 1 << 20), mk("u", 1 << 20), mk("v", 1 << 10)]).unwrap()
    }

    fn query(sql: &str, id: &str, sels: &[f64]) -> LogicalQuery {
        let mut q = parse_query(sql, &catalog(), QueryId(id.into())).unwrap();
        apply_selectivity_overrides(&mut q, sels).unwrap();
        q
    }

    #[test]
    fn no_predicates_no_improvement() {
        let q = query("SELECT a FROM t", "q1", &[]);
        assert_eq!(estimate_improvement(&q, &catalog(), 1e6).unwrap(), 0.0);
    }

    #[test]
    fn single_table_improvement_matches_formula() {
        let q = query("SELECT a FROM t WHERE b = 1", "q1", &[0.001]);
        let imp = estimate_improvement(&q, &catalog(), 1e6).unwrap();
        assert!((imp - 999_000.0).abs() < 1e-6);
    }

    #[test]
    fn two_table_improvement_splits_by_row_share() {
        // t and u have equal sizes; predicates only on t with s = 0.5.
        let q = query(
            "SELECT t.a FROM t JOIN u ON t.b = u.b WHERE t.c = 7",
            "q1",
            &[0.5],
        );
        let imp = estimate_improvement(&q, &catalog(), 1000.0).unwrap();
        assert!((imp - 1000.0 * 0.5 * 0.5).abs() < 1e-9);
    }

    #[test]
    fn improvement_bounded_by_baseline() {
        let q = query(
            "SELECT a FROM t WHERE b = 1 AND c = 2",
            "q1",
            &[0.001, 0.01],
        );
        let imp = estimate_improvement(&q, &catalog(), 500.0).unwrap();
        assert!(imp >= 0.0 && imp <= 500.0);
    }

    #[test]
    fn featurize_matches_formula() {
        // eq column with sel .001 on a 2^20-row table: 1.0 * 20 * 0.999.
        let q = query("SELECT a FROM t WHERE b = 1", "q1", &[0.001]);
        let v = featurize(&q, &catalog()).unwrap();
        let w = v.weights.get("t.b.filter_eq").unwrap();
        assert!((w - 19.98).abs() < 1e-9);

        // order_by column on a 2^10-row table: 0.4 * 10 * 0.5 = 2.0.
        let q2 = query("SELECT a FROM v ORDER BY c", "q2", &[]);
        let v2 = featurize(&q2, &catalog()).unwrap();
        assert!((v2.weights.get("v.c.order_by").unwrap() - 2.0).abs() < 1e-9);

        // No indexable columns: empty vector.
        let q3 = query("SELECT a FROM t", "q3", &[]);
        assert!(featurize(&q3, &catalog()).unwrap().is_empty());
    }

    #[test]
    fn similarity_basics() {
        let mk = |pairs: &[(&str, f64)]| QueryFeatureVector {
            weights: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        let a = mk(&[("x", 1.0)]);
        let ab = mk(&[("x", 1.0), ("y", 1.0)]);
        let b = mk(&[("y", 2.0)]);
        assert_eq!(similarity(&a, &a), 1.0);
        assert_eq!(similarity(&a, &b), 0.0);
        assert!((similarity(&a, &ab) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(similarity(&a, &ab), similarity(&ab, &a));
        assert_eq!(similarity(&QueryFeatureVector::default(), &a), 0.0);
    }

    fn workload(queries: Vec<LogicalQuery>, baselines: &[(&str, f64)]) -> Workload {
        let mut w = Workload::new(queries).unwrap();
        w.baseline_costs = Some(
            baselines
                .iter()
                .map(|(id, c)| (QueryId(id.to_string()), *c))
                .collect(),
        );
        w
    }

    #[test]
    fn identity_when_k_covers_workload() {
        let w = workload(
            vec![query("SELECT a FROM t WHERE b = 1", "q1", &[0.01])],
            &[("q1", 100.0)],
        );
        let c = compress_workload(&w, &catalog(), 5).unwrap();
        assert!(c.no_op);
        assert_eq!(c.queries.len(), 1);
    }

    #[test]
    fn twins_collapse_and_distinct_survives() {
        let twin1 = query("SELECT a FROM t WHERE b = 1", "q1", &[0.001]);
        let twin2 = query("SELECT a FROM t WHERE b = 2", "q2", &[0.001]);
        let distinct = query("SELECT a FROM u WHERE c = 3", "q3", &[0.01]);
        let w = workload(
            vec![twin1, twin2, distinct],
            &[("q1", 1e6), ("q2", 1e6), ("q3", 1e5)],
        );
        let c = compress_workload(&w, &catalog(), 2).unwrap();
        assert_eq!(c.queries.len(), 2);
        let ids: Vec<&str> = c.selected_ids.iter().map(|i| i.0.as_str()).collect();
        // One twin (q1 by tie-break) plus the distinct query: the second
        // twin's residual is annihilated by damping.
        assert!(ids.contains(&"q1") ^ ids.contains(&"q2"));
        assert!(ids.contains(&"q3"));
        // Weight preservation: the unselected twin's weight was absorbed.
        let total: f64 = c.queries.iter().map(|q| q.weight).sum();
        assert!((total - 3.0).abs() < 1e-9);
        let q1 = c.queries.iter().find(|q| q.id.0 == "q1").unwrap();
        assert!((q1.weight - 2.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_improvements_select_by_id() {
        let qs = vec![
            query("SELECT a FROM t", "q3", &[]),
            query("SELECT a FROM t", "q1", &[]),
            query("SELECT a FROM t", "q2", &[]),
        ];
        let w = workload(qs, &[("q1", 10.0), ("q2", 10.0), ("q3", 10.0)]);
        let c = compress_workload(&w, &catalog(), 2).unwrap();
        let ids: Vec<&str> = c.selected_ids.iter().map(|i| i.0.as_str()).collect();
        assert_eq!(ids, vec!["q1", "q2"]);
    }

    #[test]
    fn output_size_and_weight_preservation() {
        let mut qs = Vec::new();
        let mut baselines = Vec::new();
        for i in 0..10 {
            let id = format!("q{i:02}");
            let mut q = query(
                "SELECT a FROM t WHERE b = 1",
                &id,
                &[0.001 * (i + 1) as f64],
            );
            q.weight = (i + 1) as f64;
            qs.push(q);
            baselines.push((id, 1e5 * (i + 1) as f64));
        }
        let refs: Vec<(&str, f64)> = baselines.iter().map(|(s, c)| (s.as_str(), *c)).collect();
        let w = workload(qs, &refs);
        let before: f64 = w.queries.iter().map(|q| q.weight).sum();
        let c = compress_workload(&w, &catalog(), 4).unwrap();
        assert_eq!(c.queries.len(), 4);
        let after: f64 = c.queries.iter().map(|q| q.weight).sum();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn linear_scores_match_quadratic_oracle() {
        let mut qs = Vec::new();
        let mut baselines = Vec::new();
        let sqls = [
            "SELECT a FROM t WHERE b = 1",
            "SELECT a FROM t WHERE b = 2 AND c = 3",
            "SELECT a FROM u WHERE b = 4",
            "SELECT a FROM t ORDER BY c",
            "SELECT t.a FROM t JOIN u ON t.b = u.b WHERE t.c = 5",
            "SELECT a FROM v WHERE c BETWEEN 1 AND 2",
        ];
        for (i, sql) in sqls.iter().cycle().take(36).enumerate() {
            let id = format!("q{i:02}");
            let sel = 0.001 + 0.01 * (i % 7) as f64;
            let n_preds = sql.matches('=').count().min(2);
            let q = query(sql, &id, &vec![sel; n_preds.min(1)]);
            qs.push(q);
            baselines.push((id, 1e4 + (i as f64) * 931.0));
        }
        let refs: Vec<(&str, f64)> = baselines.iter().map(|(s, c)| (s.as_str(), *c)).collect();
        let w = workload(qs, &refs);
        let fast = linear_scores(&w, &catalog()).unwrap();
        let slow = pairwise_scores(&w, &catalog()).unwrap();
        for (f, s) in fast.iter().zip(slow.iter()) {
            let denom = s.abs().max(1.0);
            assert!(((f - s) / denom).abs() < 1e-9, "fast {f} vs slow {s}");
        }
    }
}
