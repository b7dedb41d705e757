//! Common data representation shared by every tuning component and engine
//! adapter: queries, indexes, configurations, constraints, statistics, and
//! plan descriptors. Values are immutable after construction and safe to
//! share across concurrent evaluators.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a column plays in the clause it was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseRole {
    FilterEq,
    FilterRange,
    Join,
    GroupBy,
    OrderBy,
    Projected,
}

impl ClauseRole {
    /// Priority used when one column appears under several roles:
    /// filter_eq > join > filter_range > group_by > order_by > projected.
    pub fn priority(self) -> u8 {
        match self {
            ClauseRole::FilterEq => 0,
            ClauseRole::Join => 1,
            ClauseRole::FilterRange => 2,
            ClauseRole::GroupBy => 3,
            ClauseRole::OrderBy => 4,
            ClauseRole::Projected => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClauseRole::FilterEq => "filter_eq",
            ClauseRole::FilterRange => "filter_range",
            ClauseRole::Join => "join",
            ClauseRole::GroupBy => "group_by",
            ClauseRole::OrderBy => "order_by",
            ClauseRole::Projected => "projected",
        }
    }
}

/// Reference to a table column together with the clause role it was seen in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
    pub role: ClauseRole,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>, role: ClauseRole) -> Self {
        let c = ColumnRef {
            table: table.into(),
            column: column.into(),
            role,
        };
        debug_assert!(!c.table.is_empty() && !c.column.is_empty());
        c
    }

    pub fn qualified(&self) -> String {
        format!("{}.{}", self.table, self.column)
    }
}

/// Comparison operator of a filter predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredOp {
    Eq,
    Range,
}

/// A conjunct of the WHERE clause with its estimated selectivity in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: PredOp,
    pub selectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub String);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub String);

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A parsed single-block query: the unit the tuner optimizes for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalQuery {
    pub id: QueryId,
    /// Multiplicity of the query in the workload; > 0.
    pub weight: f64,
    /// One or two referenced tables, in FROM/JOIN order.
    pub tables: Vec<String>,
    pub predicates: Vec<Predicate>,
    /// Equi-join between one column of each table, when two tables are read.
    pub join_pred: Option<(ColumnRef, ColumnRef)>,
    pub group_by: Vec<ColumnRef>,
    pub order_by: Vec<ColumnRef>,
    pub projected: BTreeSet<ColumnRef>,
    pub template_id: TemplateId,
}

impl LogicalQuery {
    pub fn references_table(&self, table: &str) -> bool {
        self.tables.iter().any(|t| t == table)
    }

    /// All column names the query touches on `table`, across every clause.
    pub fn referenced_columns(&self, table: &str) -> BTreeSet<String> {
        let mut cols = BTreeSet::new();
        for p in &self.predicates {
            if p.column.table == table {
                cols.insert(p.column.column.clone());
            }
        }
        if let Some((a, b)) = &self.join_pred {
            for c in [a, b] {
                if c.table == table {
                    cols.insert(c.column.clone());
                }
            }
        }
        for c in self.group_by.iter().chain(self.order_by.iter()) {
            if c.table == table {
                cols.insert(c.column.clone());
            }
        }
        for c in &self.projected {
            if c.table == table {
                cols.insert(c.column.clone());
            }
        }
        cols
    }

    /// Sort requirement of the query: ORDER BY columns when present,
    /// otherwise GROUP BY columns.
    pub fn sort_columns(&self) -> &[ColumnRef] {
        if !self.order_by.is_empty() {
            &self.order_by
        } else {
            &self.group_by
        }
    }

    /// Product of the selectivities of all predicates on `table` (1.0 if none).
    pub fn selectivity_product(&self, table: &str) -> f64 {
        self.predicates
            .iter()
            .filter(|p| p.column.table == table)
            .map(|p| p.selectivity)
            .product()
    }
}

/// The input workload: weighted queries plus, once computed, their baseline
/// (empty-configuration) what-if costs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Workload {
    pub queries: Vec<LogicalQuery>,
    /// Baseline cost per query under the empty hypothetical configuration.
    pub baseline_costs: Option<BTreeMap<QueryId, f64>>,
}

impl Workload {
    pub fn new(queries: Vec<LogicalQuery>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for q in &queries {
            if !seen.insert(q.id.clone()) {
                return Err(Error::InvalidRequest(format!(
                    "duplicate query id '{}'",
                    q.id
                )));
            }
            if !(q.weight > 0.0) {
                return Err(Error::InvalidRequest(format!(
                    "query '{}' has non-positive weight",
                    q.id
                )));
            }
        }
        Ok(Workload {
            queries,
            baseline_costs: None,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.queries.iter().map(|q| q.weight).sum()
    }

    pub fn get(&self, id: &QueryId) -> Option<&LogicalQuery> {
        self.queries.iter().find(|q| &q.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexId(pub String);

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Definition of a (hypothetical) index: ordered key columns plus an
/// unordered set of included columns on one table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDef {
    pub table: String,
    pub key_columns: Vec<String>,
    pub included_columns: BTreeSet<String>,
}

impl IndexDef {
    /// Builds an index definition, normalizing the included set so that key
    /// and included columns stay disjoint.
    pub fn new<K, I>(table: impl Into<String>, keys: K, included: I) -> Result<Self>
    where
        K: IntoIterator,
        K::Item: Into<String>,
        I: IntoIterator,
        I::Item: Into<String>,
    {
        let table = table.into();
        let key_columns: Vec<String> = keys.into_iter().map(Into::into).collect();
        if key_columns.is_empty() {
            return Err(Error::Schema(format!(
                "index on '{table}' has no key columns"
            )));
        }
        let mut seen = BTreeSet::new();
        for k in &key_columns {
            if !seen.insert(k.clone()) {
                return Err(Error::Schema(format!(
                    "index on '{table}' repeats key column '{k}'"
                )));
            }
        }
        let included_columns = included
            .into_iter()
            .map(Into::into)
            .filter(|c| !seen.contains(c))
            .collect();
        Ok(IndexDef {
            table,
            key_columns,
            included_columns,
        })
    }

    pub fn single(table: impl Into<String>, key: impl Into<String>) -> Self {
        // One key column can never violate the constructor invariants.
        IndexDef::new(table, [key.into()], std::iter::empty::<String>()).unwrap()
    }

    /// Canonical identifier: a pure function of (table, key order, included
    /// set). Two definitions are the same index iff their ids are equal, and
    /// the lexicographic order over ids is the global tie-breaking order.
    pub fn canonical_id(&self) -> IndexId {
        let mut s = String::with_capacity(32);
        s.push_str("ix:");
        s.push_str(&self.table);
        s.push_str(":k=");
        for (i, k) in self.key_columns.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(k);
        }
        if !self.included_columns.is_empty() {
            s.push_str(":i=");
            for (i, c) in self.included_columns.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                s.push_str(c);
            }
        }
        IndexId(s)
    }

    pub fn validate_against(&self, stats: &TableStats) -> Result<()> {
        if stats.table != self.table {
            return Err(Error::Schema(format!(
                "index targets table '{}' but stats are for '{}'",
                self.table, stats.table
            )));
        }
        for c in self.key_columns.iter().chain(self.included_columns.iter()) {
            if !stats.columns.contains_key(c) {
                return Err(Error::Schema(format!(
                    "column '{}' does not exist on table '{}'",
                    c, self.table
                )));
            }
        }
        Ok(())
    }

    /// DDL-style rendering for reports.
    pub fn ddl(&self) -> String {
        let name = format!("ix_{}_{}", self.table, self.key_columns.join("_"));
        let mut ddl = format!(
            "CREATE INDEX {} ON {} ({})",
            name,
            self.table,
            self.key_columns.join(", ")
        );
        if !self.included_columns.is_empty() {
            let inc: Vec<&str> = self.included_columns.iter().map(String::as_str).collect();
            ddl.push_str(&format!(" INCLUDE ({})", inc.join(", ")));
        }
        ddl.push(';');
        ddl
    }
}

/// Canonical identifier of an index definition.
pub fn canonical_index_id(index: &IndexDef) -> IndexId {
    index.canonical_id()
}

/// A set of indexes evaluated or recommended together.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    indexes: BTreeMap<IndexId, IndexDef>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration::default()
    }

    pub fn from_indexes<I: IntoIterator<Item = IndexDef>>(indexes: I) -> Self {
        let mut c = Configuration::empty();
        for i in indexes {
            c.insert(i);
        }
        c
    }

    pub fn insert(&mut self, index: IndexDef) {
        self.indexes.insert(index.canonical_id(), index);
    }

    pub fn remove(&mut self, id: &IndexId) -> Option<IndexDef> {
        self.indexes.remove(id)
    }

    pub fn contains(&self, id: &IndexId) -> bool {
        self.indexes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.indexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &IndexDef> {
        self.indexes.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &IndexId> {
        self.indexes.keys()
    }

    pub fn on_table<'a>(&'a self, table: &str) -> impl Iterator<Item = &'a IndexDef> {
        let table = table.to_string();
        self.indexes.values().filter(move |i| i.table == table)
    }

    pub fn with(&self, index: IndexDef) -> Self {
        let mut c = self.clone();
        c.insert(index);
        c
    }

    pub fn without(&self, id: &IndexId) -> Self {
        let mut c = self.clone();
        c.remove(id);
        c
    }

    /// Sub-configuration containing only indexes on the given tables.
    pub fn restricted_to(&self, tables: &[String]) -> Configuration {
        Configuration {
            indexes: self
                .indexes
                .iter()
                .filter(|(_, i)| tables.iter().any(|t| *t == i.table))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Order-insensitive canonical signature.
    pub fn signature(&self) -> String {
        let mut s = String::new();
        for (i, id) in self.indexes.keys().enumerate() {
            if i > 0 {
                s.push('|');
            }
            s.push_str(&id.0);
        }
        s
    }

    pub fn total_size_bytes(&self, catalog: &Catalog) -> Result<u64> {
        let mut total = 0u64;
        for idx in self.indexes.values() {
            total += estimate_index_size(idx, catalog.stats(&idx.table)?)?;
        }
        Ok(total)
    }
}

/// Tuning constraints: the limits the recommended configuration must honor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConstraints {
    /// Maximum number of recommended indexes (K).
    pub max_indexes: usize,
    pub storage_budget_bytes: Option<u64>,
    pub whatif_budget: Option<u64>,
    /// Minimum per-round relative improvement for greedy-style search.
    pub min_improvement_epsilon: f64,
}

impl TuningConstraints {
    pub fn new(max_indexes: usize) -> Result<Self> {
        if max_indexes < 1 {
            return Err(Error::InvalidRequest(
                "max_indexes must be at least 1".into(),
            ));
        }
        Ok(TuningConstraints {
            max_indexes,
            storage_budget_bytes: None,
            whatif_budget: None,
            min_improvement_epsilon: 0.001,
        })
    }

    pub fn with_storage_budget(mut self, bytes: u64) -> Self {
        self.storage_budget_bytes = Some(bytes);
        self
    }

    pub fn with_whatif_budget(mut self, calls: u64) -> Self {
        self.whatif_budget = Some(calls);
        self
    }
}

/// Per-column statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub width_bytes: u32,
    pub distinct_count: u64,
}

/// Statistics for one table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableStats {
    pub table: String,
    pub rows: u64,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl TableStats {
    pub fn column(&self, name: &str) -> Result<&ColumnStats> {
        self.columns.get(name).ok_or_else(|| {
            Error::Schema(format!(
                "column '{}' does not exist on table '{}'",
                name, self.table
            ))
        })
    }
}

/// The schema/statistics catalog the virtual engine serves.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub tables: BTreeMap<String, TableStats>,
}

impl Catalog {
    pub fn new<I: IntoIterator<Item = TableStats>>(tables: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            if t.rows == 0 {
                return Err(Error::Schema(format!("table '{}' has zero rows", t.table)));
            }
            for (c, cs) in &t.columns {
                if cs.width_bytes == 0 {
                    return Err(Error::Schema(format!(
                        "column '{}.{c}' has zero width",
                        t.table
                    )));
                }
                if cs.distinct_count == 0 || cs.distinct_count > t.rows {
                    return Err(Error::Schema(format!(
                        "column '{}.{c}' distinct count {} out of range 1..={}",
                        t.table, cs.distinct_count, t.rows
                    )));
                }
            }
            if map.insert(t.table.clone(), t).is_some() {
                return Err(Error::Schema("duplicate table in catalog".into()));
            }
        }
        Ok(Catalog { tables: map })
    }

    pub fn stats(&self, table: &str) -> Result<&TableStats> {
        self.tables
            .get(table)
            .ok_or_else(|| Error::Schema(format!("unknown table '{table}'")))
    }
}

/// Per-row storage overhead assumed for every index. Arbitrary but fixed;
/// only relative sizes matter for the storage constraint.
pub const INDEX_ROW_OVERHEAD_BYTES: u64 = 16;

/// Estimated on-disk size of an index:
/// rows x (sum of key+included column widths + fixed row overhead).
pub fn estimate_index_size(index: &IndexDef, stats: &TableStats) -> Result<u64> {
    index.validate_against(stats)?;
    let mut width: u64 = 0;
    for c in index
        .key_columns
        .iter()
        .chain(index.included_columns.iter())
    {
        width += stats.column(c)?.width_bytes as u64;
    }
    Ok(stats.rows * (width + INDEX_ROW_OVERHEAD_BYTES))
}

/// Access path chosen for one table in a what-if plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableAccess {
    FullScan,
    IndexSeek {
        index_id: IndexId,
        matched_prefix_len: usize,
        covering: bool,
    },
}

impl TableAccess {
    fn signature_part(&self) -> String {
        match self {
            TableAccess::FullScan => "scan".to_string(),
            TableAccess::IndexSeek {
                index_id,
                matched_prefix_len,
                covering,
            } => format!(
                "seek({},{},{})",
                index_id,
                matched_prefix_len,
                if *covering { "c" } else { "n" }
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinMethod {
    IndexNestedLoop,
    Hash,
}

/// Canonical description of a what-if plan; `signature` is a pure function
/// of the other fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDescriptor {
    /// Access path per table, keyed by table name.
    pub accesses: BTreeMap<String, TableAccess>,
    pub sort_eliminated: bool,
    pub join_method: Option<JoinMethod>,
    pub signature: String,
}

impl PlanDescriptor {
    pub fn new(
        accesses: BTreeMap<String, TableAccess>,
        sort_eliminated: bool,
        join_method: Option<JoinMethod>,
    ) -> Self {
        let mut sig = String::new();
        for (t, a) in &accesses {
            sig.push_str(t);
            sig.push('=');
            sig.push_str(&a.signature_part());
            sig.push(';');
        }
        sig.push_str(if sort_eliminated {
            "sort_elim=t"
        } else {
            "sort_elim=f"
        });
        match join_method {
            Some(JoinMethod::Hash) => sig.push_str(";join=hash"),
            Some(JoinMethod::IndexNestedLoop) => sig.push_str(";join=inl"),
            None => {}
        }
        PlanDescriptor {
            accesses,
            sort_eliminated,
            join_method,
            signature: sig,
        }
    }

    pub fn access(&self, table: &str) -> Option<&TableAccess> {
        self.accesses.get(table)
    }

    /// Ids of all indexes the plan seeks on, in canonical order.
    pub fn seek_index_ids(&self) -> Vec<IndexId> {
        let mut ids: Vec<IndexId> = self
            .accesses
            .values()
            .filter_map(|a| match a {
                TableAccess::IndexSeek { index_id, .. } => Some(index_id.clone()),
                TableAccess::FullScan => None,
            })
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}
