//! Syntactic candidate-index generation per query and the workload-level
//! union into the candidate set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ir::{ClauseRole, ColumnRef, IndexDef, IndexId, LogicalQuery, QueryId, Workload};
use crate::sql::extract_indexable_columns;

pub const DEFAULT_MAX_KEY_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    SingleColumn,
    MultiColumnPrefix,
    Covering,
    Merged,
}

/// A syntactically relevant index paired with the query that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatePair {
    pub query_id: QueryId,
    pub index: IndexDef,
    pub origin: CandidateOrigin,
}

/// One entry of the workload-level candidate set: the index plus the ids of
/// the queries interested in it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub index: IndexDef,
    pub interested: Vec<QueryId>,
}

/// Candidate set, ordered by canonical index id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<CandidateEntry>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indexes(&self) -> impl Iterator<Item = &IndexDef> {
        self.entries.iter().map(|e| &e.index)
    }

    pub fn get(&self, id: &IndexId) -> Option<&CandidateEntry> {
        self.entries.iter().find(|e| e.index.canonical_id() == *id)
    }

    /// Candidates interesting to one query, in canonical order.
    pub fn for_query(&self, id: &QueryId) -> Vec<&CandidateEntry> {
        self.entries
            .iter()
            .filter(|e| e.interested.contains(id))
            .collect()
    }
}

/// Emits the syntactically relevant indexes of one query, per table:
/// single-key indexes for every indexable column, key permutations up to
/// `max_key_width` (a range column never ahead of an equality column), and
/// covering variants including the query's projected columns.
pub fn generate_syntactic_indexes(q: &LogicalQuery, max_key_width: usize) -> Vec<CandidatePair> {
    let indexable = extract_indexable_columns(q);
    let mut out: Vec<CandidatePair> = Vec::new();
    let mut seen: BTreeSet<IndexId> = BTreeSet::new();
    let mut push = |index: IndexDef, origin: CandidateOrigin, out: &mut Vec<CandidatePair>| {
        if seen.insert(index.canonical_id()) {
            out.push(CandidatePair {
                query_id: q.id.clone(),
                index,
                origin,
            });
        }
    };

    for table in &q.tables {
        // Pool ordered by role priority; group/order columns keep clause order
        // (extract_indexable_columns already yields this order).
        let pool: Vec<&ColumnRef> = indexable.iter().filter(|c| &c.table == table).collect();
        if pool.is_empty() {
            continue;
        }
        let projected: Vec<String> = q
            .projected
            .iter()
            .filter(|c| &c.table == table)
            .map(|c| c.column.clone())
            .collect();

        let mut keysets: Vec<Vec<&ColumnRef>> = Vec::new();
        for c in &pool {
            keysets.push(vec![c]);
        }
        let width = max_key_width.min(pool.len());
        let mut perms: Vec<Vec<&ColumnRef>> = pool.iter().map(|c| vec![*c]).collect();
        for _ in 2..=width {
            let mut next: Vec<Vec<&ColumnRef>> = Vec::new();
            for p in &perms {
                for c in &pool {
                    if p.iter().any(|e| e.column == c.column) {
                        continue;
                    }
                    let mut ext = p.clone();
                    ext.push(c);
                    if range_before_eq(&ext) {
                        continue;
                    }
                    next.push(ext);
                }
            }
            keysets.extend(next.iter().cloned());
            perms = next;
        }

        for keys in keysets {
            let origin = if keys.len() == 1 {
                CandidateOrigin::SingleColumn
            } else {
                CandidateOrigin::MultiColumnPrefix
            };
            let key_names: Vec<String> = keys.iter().map(|c| c.column.clone()).collect();
            if let Ok(base) = IndexDef::new(table.clone(), key_names.clone(), Vec::<String>::new())
            {
                push(base, origin, &mut out);
            }
            if !projected.is_empty() {
                if let Ok(cov) = IndexDef::new(table.clone(), key_names, projected.clone()) {
                    if !cov.included_columns.is_empty() {
                        push(cov, CandidateOrigin::Covering, &mut out);
                    }
                }
            }
        }
    }
    out
}

fn range_before_eq(keys: &[&ColumnRef]) -> bool {
    for (i, k) in keys.iter().enumerate() {
        if k.role == ClauseRole::FilterRange {
            if keys[i + 1..]
                .iter()
                .any(|later| later.role == ClauseRole::FilterEq)
            {
                return true;
            }
        }
    }
    false
}

/// Unions per-query candidate pairs into the workload candidate set, keyed by
/// canonical index id, with per-index interested-query lists.
pub fn union_candidates(pairs: &[CandidatePair]) -> CandidateSet {
    let mut map: BTreeMap<IndexId, CandidateEntry> = BTreeMap::new();
    for pair in pairs {
        let id = pair.index.canonical_id();
        let entry = map.entry(id).or_insert_with(|| CandidateEntry {
            index: pair.index.clone(),
            interested: Vec::new(),
        });
        if !entry.interested.contains(&pair.query_id) {
            entry.interested.push(pair.query_id.clone());
        }
    }
    let mut entries: Vec<CandidateEntry> = map.into_values().collect();
    for e in &mut entries {
        e.interested.sort();
    }
    CandidateSet { entries }
}

/// Convenience: generate and union over a whole workload.
pub fn workload_candidates(
    w: &Workload,
    max_key_width: usize,
) -> (Vec<CandidatePair>, CandidateSet) {
    let mut pairs = Vec::new();
    for q in &w.queries {
        pairs.extend(generate_syntactic_indexes(q, max_key_width));
    }
    let set = union_candidates(&pairs);
    (pairs, set)
}
