//! Deterministic generator of synthetic schemas, statistics, and workloads.
//! Feeds ML training (filter, QPR) and every property/acceptance experiment.
//! Everything is a pure function of the generator spec.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{SchemaFile, WorkloadFile, WorkloadRow};
use crate::ir::{Catalog, ColumnStats, QueryId, TableStats, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalPattern {
    None,
    Periodic { period: usize },
    Bursty,
}

/// Everything the generator needs; ranges are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub table_count: (usize, usize),
    /// Row counts drawn log-uniformly from this range, so seek-versus-scan
    /// trade-offs vary across tables.
    pub rows: (u64, u64),
    pub columns_per_table: (usize, usize),
    /// Skew of per-column distinct counts: distinct = rows^u with u drawn
    /// uniformly from [skew, 1]. Lower skew means more low-cardinality
    /// columns.
    pub distinct_skew: f64,
    pub query_count: usize,
    pub template_count: usize,
    pub predicates_per_query: (usize, usize),
    pub join_probability: f64,
    pub arrival_pattern: ArrivalPattern,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 0,
            table_count: (2, 4),
            rows: (1_000, 10_000_000),
            columns_per_table: (4, 8),
            distinct_skew: 0.15,
            query_count: 50,
            template_count: 5,
            predicates_per_query: (1, 3),
            join_probability: 0.25,
            arrival_pattern: ArrivalPattern::None,
        }
    }
}

impl GeneratorSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.table_count.0 > self.table_count.1 || self.table_count.0 == 0 {
            return Err(Error::InvalidRequest("bad table count range".into()));
        }
        if self.rows.0 > self.rows.1 || self.rows.0 == 0 {
            return Err(Error::InvalidRequest("bad rows range".into()));
        }
        if self.columns_per_table.0 > self.columns_per_table.1 || self.columns_per_table.0 < 2 {
            return Err(Error::InvalidRequest(
                "need at least two columns per table".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.join_probability) {
            return Err(Error::InvalidRequest(
                "join probability out of [0,1]".into(),
            ));
        }
        if self.template_count == 0 || self.query_count == 0 {
            return Err(Error::InvalidRequest(
                "need at least one template and query".into(),
            ));
        }
        Ok(())
    }
}

/// Generated database: catalog plus workload, in both parsed and file form.
#[derive(Debug, Clone)]
pub struct SynthDatabase {
    pub catalog: Catalog,
    pub workload: Workload,
    pub arrivals: BTreeMap<QueryId, u64>,
    pub schema_file: SchemaFile,
    pub workload_file: WorkloadFile,
}

struct TemplateSpec {
    tables: Vec<usize>,
    join_cols: Option<(String, String)>,
    /// (table slot, column, is_range)
    predicates: Vec<(usize, String, bool)>,
    group_by: Vec<(usize, String)>,
    order_by: Vec<(usize, String)>,
    projected: Vec<(usize, String)>,
    /// Normalized shape used to keep generated templates distinct.
    shape: String,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    if lo >= hi {
        return lo;
    }
    let (llo, lhi) = ((lo as f64).ln(), (hi as f64).ln());
    let v = rng.gen_range(llo..lhi).exp();
    (v.round() as u64).clamp(lo, hi)
}

fn gen_tables(rng: &mut ChaCha8Rng, spec: &GeneratorSpec) -> Vec<TableStats> {
    let n = rng.gen_range(spec.table_count.0..=spec.table_count.1);
    let widths = [4u32, 8, 8, 8, 16, 32];
    (0..n)
        .map(|i| {
            let rows = log_uniform(rng, spec.rows.0, spec.rows.1);
            let ncols = rng.gen_range(spec.columns_per_table.0..=spec.columns_per_table.1);
            let columns: BTreeMap<String, ColumnStats> = (0..ncols)
                .map(|j| {
                    let width = widths[rng.gen_range(0..widths.len())];
                    let u = rng.gen_range(spec.distinct_skew..1.0);
                    let distinct = ((rows as f64).powf(u).round() as u64).clamp(2.min(rows), rows);
                    (
                        format!("c{j}"),
                        ColumnStats {
                            width_bytes: width,
                            distinct_count: distinct,
                        },
                    )
                })
                .collect();
            TableStats {
                table: format!("t{i}"),
                rows,
                columns,
            }
        })
        .collect()
}

fn pick_column(
    rng: &mut ChaCha8Rng,
    table: &TableStats,
    taken: &BTreeSet<String>,
) -> Option<String> {
    let free: Vec<&String> = table
        .columns
        .keys()
        .filter(|c| !taken.contains(*c))
        .collect();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.gen_range(0..free.len())].clone())
    }
}

fn gen_template(rng: &mut ChaCha8Rng, spec: &GeneratorSpec, tables: &[TableStats]) -> TemplateSpec {
    let two = tables.len() >= 2 && rng.gen_range(0.0..1.0) < spec.join_probability;
    let t0 = rng.gen_range(0..tables.len());
    let mut slots = vec![t0];
    let mut join_cols = None;
    if two {
        let mut t1 = rng.gen_range(0..tables.len() - 1);
        if t1 >= t0 {
            t1 += 1;
        }
        slots.push(t1);
        let a = pick_column(rng, &tables[t0], &BTreeSet::new()).unwrap();
        let b = pick_column(rng, &tables[t1], &BTreeSet::new()).unwrap();
        join_cols = Some((a, b));
    }

    let p = rng
        .gen_range(spec.predicates_per_query.0..=spec.predicates_per_query.1)
        .max(1);
    let mut taken: Vec<BTreeSet<String>> = vec![BTreeSet::new(); slots.len()];
    let mut predicates = Vec::new();
    for _ in 0..p {
        let slot = rng.gen_range(0..slots.len());
        if let Some(col) = pick_column(rng, &tables[slots[slot]], &taken[slot]) {
            taken[slot].insert(col.clone());
            let is_range = rng.gen_range(0.0..1.0) < 0.3;
            predicates.push((slot, col, is_range));
        }
    }

    let mut group_by = Vec::new();
    if rng.gen_range(0.0..1.0) < 0.3 {
        let slot = rng.gen_range(0..slots.len());
        if let Some(col) = pick_column(rng, &tables[slots[slot]], &BTreeSet::new()) {
            group_by.push((slot, col));
        }
    }
    let mut order_by = Vec::new();
    if rng.gen_range(0.0..1.0) < 0.35 {
        let slot = rng.gen_range(0..slots.len());
        let n_ord = if rng.gen_range(0.0..1.0) < 0.25 {
            2usize
        } else {
            1
        };
        let mut used = BTreeSet::new();
        for _ in 0..n_ord {
            if let Some(col) = pick_column(rng, &tables[slots[slot]], &used) {
                used.insert(col.clone());
                order_by.push((slot, col));
            }
        }
    }

    let mut projected = Vec::new();
    let n_proj = rng.gen_range(1..=3usize);
    let mut used = BTreeSet::new();
    for _ in 0..n_proj {
        let slot = rng.gen_range(0..slots.len());
        if let Some(col) = pick_column(rng, &tables[slots[slot]], &used) {
            used.insert(col.clone());
            projected.push((slot, col));
        }
    }
    if projected.is_empty() {
        projected.push((0, tables[slots[0]].columns.keys().next().unwrap().clone()));
    }

    let mut t = TemplateSpec {
        tables: slots,
        join_cols,
        predicates,
        group_by,
        order_by,
        projected,
        shape: String::new(),
    };
    t.shape = render_sql(&t, tables, None);
    t
}

/// Renders the template as SQL; with bindings, literals come from the
/// binding values, otherwise a `?` placeholder (shape form).
fn render_sql(t: &TemplateSpec, tables: &[TableStats], bindings: Option<&[i64]>) -> String {
    let tn = |slot: usize| &tables[t.tables[slot]].table;
    let mut s = String::from("SELECT ");
    let proj: Vec<String> = t
        .projected
        .iter()
        .map(|(slot, c)| format!("{}.{}", tn(*slot), c))
        .collect();
    s.push_str(&proj.join(", "));
    s.push_str(&format!(" FROM {}", tn(0)));
    if let Some((a, b)) = &t.join_cols {
        s.push_str(&format!(
            " JOIN {} ON {}.{} = {}.{}",
            tn(1),
            tn(0),
            a,
            tn(1),
            b
        ));
    }
    if !t.predicates.is_empty() {
        s.push_str(" WHERE ");
        let parts: Vec<String> = t
            .predicates
            .iter()
            .enumerate()
            .map(|(i, (slot, col, is_range))| {
                let lit = |k: usize| match bindings {
                    Some(vals) => vals[2 * i + k].to_string(),
                    None => "?".to_string(),
                };
                if *is_range {
                    format!("{}.{} BETWEEN {} AND {}", tn(*slot), col, lit(0), lit(1))
                } else {
                    format!("{}.{} = {}", tn(*slot), col, lit(0))
                }
            })
            .collect();
        s.push_str(&parts.join(" AND "));
    }
    if !t.group_by.is_empty() {
        let cols: Vec<String> = t
            .group_by
            .iter()
            .map(|(slot, c)| format!("{}.{}", tn(*slot), c))
            .collect();
        s.push_str(&format!(" GROUP BY {}", cols.join(", ")));
    }
    if !t.order_by.is_empty() {
        let cols: Vec<String> = t
            .order_by
            .iter()
            .map(|(slot, c)| format!("{}.{}", tn(*slot), c))
            .collect();
        s.push_str(&format!(" ORDER BY {}", cols.join(", ")));
    }
    s
}

/// Allocates `total` instances across `buckets` proportionally to `shape`
/// by largest remainder; deterministic.
fn allocate_counts(total: usize, shape: &[f64]) -> Vec<usize> {
    let sum: f64 = shape.iter().sum();
    if sum <= 0.0 {
        let mut v = vec![0; shape.len()];
        if !v.is_empty() {
            v[0] = total;
        }
        return v;
    }
    let exact: Vec<f64> = shape.iter().map(|s| total as f64 * s / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rema: Vec<(usize, f64)> = exact
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e - e.floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..total - assigned {
        counts[rema[k % rema.len()].0] += 1;
    }
    counts
}

const ARRIVAL_BUCKETS: usize = 64;

/// Generates a deterministic schema, statistics, and workload from the spec.
/// Every emitted query parses under the SQL frontend; instances of a template
/// vary in literal bindings and carry explicit per-predicate selectivities.
pub fn generate(spec: &GeneratorSpec) -> Result<SynthDatabase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tables = gen_tables(&mut rng, spec);
    let catalog = Catalog::new(tables.clone())?;

    // Distinct templates by normalized shape; bounded retries.
    let mut templates: Vec<TemplateSpec> = Vec::new();
    let mut shapes: BTreeSet<String> = BTreeSet::new();
    let mut attempts = 0usize;
    while templates.len() < spec.template_count {
        attempts += 1;
        if attempts > 200 * spec.template_count {
            return Err(Error::InsufficientData(format!(
                "could not generate {} structurally distinct templates",
                spec.template_count
            )));
        }
        let t = gen_template(&mut rng, spec, &tables);
        if shapes.insert(t.shape.clone()) {
            templates.push(t);
        }
    }

    // Per-template arrival shapes.
    let bucket_shapes: Vec<Vec<f64>> = templates
        .iter()
        .map(|_| match spec.arrival_pattern {
            ArrivalPattern::None => vec![],
            ArrivalPattern::Periodic { period } => {
                let period = period.max(1);
                let base: Vec<f64> = (0..period).map(|_| rng.gen_range(1..=6) as f64).collect();
                (0..ARRIVAL_BUCKETS).map(|b| base[b % period]).collect()
            }
            ArrivalPattern::Bursty => (0..ARRIVAL_BUCKETS)
                .map(|b| if b % 16 == 0 { 8.0 } else { 1.0 })
                .collect(),
        })
        .collect();

    // Round-robin assignment of instances to templates keeps counts balanced.
    let mut per_template_counts = vec![0usize; templates.len()];
    for i in 0..spec.query_count {
        per_template_counts[i % templates.len()] += 1;
    }
    let arrival_alloc: Vec<Vec<usize>> = templates
        .iter()
        .enumerate()
        .map(|(ti, _)| match spec.arrival_pattern {
            ArrivalPattern::None => vec![],
            _ => allocate_counts(per_template_counts[ti], &bucket_shapes[ti]),
        })
        .collect();
    let mut arrival_cursor = vec![(0usize, 0usize); templates.len()]; // (bucket, used)

    let mut rows: Vec<WorkloadRow> = Vec::with_capacity(spec.query_count);
    for i in 0..spec.query_count {
        let ti = i % templates.len();
        let t = &templates[ti];
        // Binding literals (cosmetic) and per-predicate selectivities.
        let mut literals = Vec::new();
        let mut sels = Vec::new();
        for (slot, col, is_range) in &t.predicates {
            let stats = &tables[t.tables[*slot]];
            let distinct = stats.columns[col].distinct_count as f64;
            let sel = if *is_range {
                // Log-uniform in [0.05, 0.8].
                10f64.powf(rng.gen_range(-1.0..(-0.0969)))
            } else {
                // Equality: distinct^(-u) with u biased low, so most
                // predicates are weakly selective with occasional sharp ones.
                let u = rng.gen_range(0.0..1.0f64).powf(6.0);
                (distinct.powf(-u)).clamp(1.0 / distinct, 0.98)
            };
            sels.push(sel.clamp(1e-9, 1.0));
            literals.push(rng.gen_range(0..100_000) as i64);
            literals.push(rng.gen_range(100_000..200_000) as i64);
        }
        let weight = if rng.gen_range(0.0..1.0) < 0.15 {
            rng.gen_range(2..=8) as f64
        } else {
            1.0
        };
        let arrival_ts = match spec.arrival_pattern {
            ArrivalPattern::None => None,
            _ => {
                let (bucket, used) = &mut arrival_cursor[ti];
                while *bucket < ARRIVAL_BUCKETS && *used >= arrival_alloc[ti][*bucket] {
                    *bucket += 1;
                    *used = 0;
                }
                let b = (*bucket).min(ARRIVAL_BUCKETS - 1);
                *used += 1;
                Some((b as u64) * crate::forecast::DEFAULT_BUCKET_SECONDS + (*used as u64 % 3000))
            }
        };
        rows.push(WorkloadRow {
            id: format!("q{i:04}"),
            sql: render_sql(t, &tables, Some(&literals)),
            weight: Some(weight),
            arrival_ts,
            predicate_selectivities: Some(sels),
        });
    }

    let workload_file = WorkloadFile { queries: rows };
    let (workload, arrivals) = workload_file.parse(&catalog)?;
    let schema_file = SchemaFile::from_catalog(&catalog);
    Ok(SynthDatabase {
        catalog,
        workload,
        arrivals,
        schema_file,
        workload_file,
    })
}
