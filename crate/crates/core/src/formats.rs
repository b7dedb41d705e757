//! On-disk JSON formats: the schema/statistics file and the workload file,
//! plus `.sql` workload ingestion (one statement per line).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Catalog, ColumnStats, QueryId, TableStats, Workload};
use crate::sql::{apply_selectivity_overrides, parse_query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub width: u32,
    pub distinct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaTable {
    pub name: String,
    pub rows: u64,
    pub columns: Vec<SchemaColumn>,
}

/// Schema file: `{"tables":[{"name","rows","columns":[{"name","width","distinct"}]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub tables: Vec<SchemaTable>,
}

impl SchemaFile {
    pub fn to_catalog(&self) -> Result<Catalog> {
        Catalog::new(self.tables.iter().map(|t| {
            TableStats {
                table: t.name.clone(),
                rows: t.rows,
                columns: t
                    .columns
                    .iter()
                    .map(|c| {
                        (
                            c.name.clone(),
                            ColumnStats {
                                width_bytes: c.width,
                                distinct_count: c.distinct,
                            },
                        )
                    })
                    .collect(),
            }
        }))
    }

    pub fn from_catalog(catalog: &Catalog) -> Self {
        SchemaFile {
            tables: catalog
                .tables
                .values()
                .map(|t| SchemaTable {
                    name: t.table.clone(),
                    rows: t.rows,
                    columns: t
                        .columns
                        .iter()
                        .map(|(n, c)| SchemaColumn {
                            name: n.clone(),
                            width: c.width_bytes,
                            distinct: c.distinct_count,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// One workload row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRow {
    pub id: String,
    pub sql: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_ts: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate_selectivities: Option<Vec<f64>>,
}

/// Workload file: `{"queries":[{id, sql, weight?, arrival_ts?, predicate_selectivities?}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub queries: Vec<WorkloadRow>,
}

impl WorkloadFile {
    /// Parses every row against the catalog, applying weight and selectivity
    /// overrides. Returns the workload plus arrival timestamps.
    pub fn parse(&self, catalog: &Catalog) -> Result<(Workload, BTreeMap<QueryId, u64>)> {
        let mut queries = Vec::with_capacity(self.queries.len());
        let mut arrivals = BTreeMap::new();
        for row in &self.queries {
            let id = QueryId(row.id.clone());
            let mut q = parse_query(&row.sql, catalog, id.clone())
                .map_err(|e| Error::InvalidRequest(format!("query '{}': {e}", row.id)))?;
            if let Some(wt) = row.weight {
                if !(wt > 0.0) {
                    return Err(Error::InvalidRequest(format!(
                        "query '{}' has non-positive weight {wt}",
                        row.id
                    )));
                }
                q.weight = wt;
            }
            if let Some(sels) = &row.predicate_selectivities {
                apply_selectivity_overrides(&mut q, sels)?;
            }
            if let Some(ts) = row.arrival_ts {
                arrivals.insert(id, ts);
            }
            queries.push(q);
        }
        Ok((Workload::new(queries)?, arrivals))
    }
}

/// Parses a `.sql` workload: UTF-8, one statement per line; blank lines and
/// `--` comment lines are skipped. Ids are assigned from line numbers.
pub fn parse_sql_workload(text: &str, catalog: &Catalog) -> Result<Workload> {
    let mut queries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("--") {
            continue;
        }
        let id = QueryId(format!("q{:04}", lineno + 1));
        let q = parse_query(trimmed, catalog, id)
            .map_err(|e| Error::InvalidRequest(format!("line {}: {e}", lineno + 1)))?;
        queries.push(q);
    }
    Workload::new(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_json() -> &'static str {
        r#"{"tables":[{"name":"t","rows":1000,"columns":[
            {"name":"a","width":8,"distinct":100},
            {"name":"b","width":4,"distinct":10}]}]}"#
    }

    #[test]
    fn schema_round_trips_through_catalog() {
        let f: SchemaFile = serde_json::from_str(schema_json()).unwrap();
        let catalog = f.to_catalog().unwrap();
        assert_eq!(catalog.stats("t").unwrap().rows, 1000);
        let back = SchemaFile::from_catalog(&catalog);
        assert_eq!(back.to_catalog().unwrap(), catalog);
    }

    #[test]
    fn workload_rows_parse_with_overrides() {
        let f: SchemaFile = serde_json::from_str(schema_json()).unwrap();
        let catalog = f.to_catalog().unwrap();
        let wf: WorkloadFile = serde_json::from_str(
            r#"{"queries":[
                {"id":"q1","sql":"SELECT a FROM t WHERE b = 3","weight":2.5,
                 "arrival_ts":7200,"predicate_selectivities":[0.02]}
            ]}"#,
        )
        .unwrap();
        let (w, arrivals) = wf.parse(&catalog).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.queries[0].weight, 2.5);
        assert_eq!(w.queries[0].predicates[0].selectivity, 0.02);
        assert_eq!(arrivals[&QueryId("q1".into())], 7200);
    }

    #[test]
    fn sql_file_assigns_line_number_ids_and_skips_comments() {
        let f: SchemaFile = serde_json::from_str(schema_json()).unwrap();
        let catalog = f.to_catalog().unwrap();
        let text = "-- a comment\nSELECT a FROM t WHERE b = 1\n\nSELECT b FROM t\n";
        let w = parse_sql_workload(text, &catalog).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.queries[0].id.0, "q0002");
        assert_eq!(w.queries[1].id.0, "q0004");
    }

    #[test]
    fn malformed_rows_carry_query_position_diagnostics() {
        let f: SchemaFile = serde_json::from_str(schema_json()).unwrap();
        let catalog = f.to_catalog().unwrap();
        let wf: WorkloadFile =
            serde_json::from_str(r#"{"queries":[{"id":"bad","sql":"SELECT FROM t"}]}"#).unwrap();
        let err = wf.parse(&catalog).unwrap_err();
        assert!(err.to_string().contains("bad"));
    }
}
