//! Parser for the supported single-block SQL subset, indexable-column
//! extraction, and query templatization.
//!
//! Supported grammar (case-insensitive keywords):
//!
//! ```text
//! SELECT col [, col]* FROM t1 [JOIN t2 ON c1 = c2]
//!   [WHERE pred [AND pred]*] [GROUP BY col [, col]*] [ORDER BY col [, col]*]
//! pred := col = literal | col BETWEEN literal AND literal
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv64_str;
use crate::ir::{
    Catalog, ClauseRole, ColumnRef, LogicalQuery, PredOp, Predicate, QueryId, TemplateId,
};

/// Default selectivity assumed for a range predicate when no override is given.
pub const DEFAULT_RANGE_SELECTIVITY: f64 = 0.1;

/// A query shape: the statement with literal values replaced by placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub template_id: TemplateId,
    pub normalized_text: String,
    /// (predicate position, operator) for every binding slot, in order.
    pub binding_slots: Vec<(usize, PredOp)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Str(String),
    Comma,
    Dot,
    Eq,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    tokens: Vec<(Token, usize)>,
}

impl<'a> Lexer<'a> {
    fn lex(src: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer {
            src,
            pos: 0,
            tokens: Vec::new(),
        };
        let bytes = src.as_bytes();
        while lx.pos < bytes.len() {
            let c = bytes[lx.pos] as char;
            let start = lx.pos;
            match c {
                ' ' | '\t' | '\r' | '\n' => {
                    lx.pos += 1;
                }
                ',' => {
                    lx.pos += 1;
                    lx.tokens.push((Token::Comma, start));
                }
                '.' => {
                    lx.pos += 1;
                    lx.tokens.push((Token::Dot, start));
                }
                '=' => {
                    lx.pos += 1;
                    lx.tokens.push((Token::Eq, start));
                }
                ';' => {
                    lx.pos += 1; // trailing statement terminator is tolerated
                }
                '\'' => {
                    lx.pos += 1;
                    let sstart = lx.pos;
                    while lx.pos < bytes.len() && bytes[lx.pos] as char != '\'' {
                        lx.pos += 1;
                    }
                    if lx.pos >= bytes.len() {
                        return Err(Error::Syntax {
                            position: start,
                            message: "unterminated string literal".into(),
                        });
                    }
                    let s = lx.src[sstart..lx.pos].to_string();
                    lx.pos += 1;
                    lx.tokens.push((Token::Str(s), start));
                }
                '0'..='9' | '-' => {
                    lx.pos += 1;
                    while lx.pos < bytes.len()
                        && matches!(
                            bytes[lx.pos] as char,
                            '0'..='9' | '.' | 'e' | 'E' | '+' | '-'
                        )
                    {
                        // A dot followed by an identifier char would be a column
                        // qualifier, but numbers never precede dots in this grammar.
                        lx.pos += 1;
                    }
                    lx.tokens
                        .push((Token::Number(lx.src[start..lx.pos].to_string()), start));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    lx.pos += 1;
                    while lx.pos < bytes.len()
                        && ((bytes[lx.pos] as char).is_ascii_alphanumeric()
                            || bytes[lx.pos] as char == '_')
                    {
                        lx.pos += 1;
                    }
                    lx.tokens
                        .push((Token::Ident(lx.src[start..lx.pos].to_string()), start));
                }
                other => {
                    // Name common but unsupported operators explicitly.
                    let construct = match other {
                        '<' | '>' => "comparison operator (only = and BETWEEN are supported)",
                        '(' | ')' => "parenthesized expression or subquery",
                        '*' => "star projection (list columns explicitly)",
                        _ => "unrecognized character",
                    };
                    return Err(Error::Unsupported {
                        position: start,
                        construct: format!("{construct}: '{other}'"),
                    });
                }
            }
        }
        Ok(lx.tokens)
    }
}

/// Raw (unresolved) column reference as written in the statement.
#[derive(Debug, Clone)]
struct RawCol {
    table: Option<String>,
    column: String,
}

#[derive(Debug)]
struct RawPredicate {
    col: RawCol,
    op: PredOp,
}

#[derive(Debug)]
struct RawQuery {
    projected: Vec<RawCol>,
    tables: Vec<(String, usize)>,
    join: Option<(RawCol, RawCol)>,
    predicates: Vec<RawPredicate>,
    group_by: Vec<RawCol>,
    order_by: Vec<RawCol>,
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek_keyword(&self) -> Option<String> {
        match self.tokens.get(self.idx) {
            Some((Token::Ident(s), _)) => Some(s.to_ascii_uppercase()),
            _ => None,
        }
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.idx)
            .map(|(_, p)| *p)
            .unwrap_or(self.end)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword().as_deref() == Some(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(Error::Syntax {
                position: self.pos(),
                message: format!("expected {kw}"),
            })
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize)> {
        match self.tokens.get(self.idx) {
            Some((Token::Ident(s), p)) => {
                let res = (s.clone(), *p);
                if RESERVED.contains(&res.0.to_ascii_uppercase().as_str()) {
                    return Err(Error::Syntax {
                        position: *p,
                        message: format!("expected {what}, found keyword '{s}'"),
                    });
                }
                self.idx += 1;
                Ok(res)
            }
            Some((_, p)) => Err(Error::Syntax {
                position: *p,
                message: format!("expected {what}"),
            }),
            None => Err(Error::Syntax {
                position: self.end,
                message: format!("expected {what}"),
            }),
        }
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.tokens.get(self.idx).map(|(tok, _)| tok) == Some(t) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn parse_colref(&mut self) -> Result<RawCol> {
        let (first, _) = self.expect_ident("column")?;
        if self.eat(&Token::Dot) {
            let (col, _) = self.expect_ident("column")?;
            Ok(RawCol {
                table: Some(first),
                column: col,
            })
        } else {
            Ok(RawCol {
                table: None,
                column: first,
            })
        }
    }

    fn parse_col_list(&mut self) -> Result<Vec<RawCol>> {
        let mut cols = vec![self.parse_colref()?];
        while self.eat(&Token::Comma) {
            cols.push(self.parse_colref()?);
        }
        Ok(cols)
    }

    // Literal values carry no tuning signal (selectivities come from
    // statistics or explicit overrides), so they are consumed and dropped.
    fn parse_literal(&mut self) -> Result<()> {
        match self.tokens.get(self.idx) {
            Some((Token::Number(_), _)) | Some((Token::Str(_), _)) => {
                self.idx += 1;
                Ok(())
            }
            _ => Err(Error::Syntax {
                position: self.pos(),
                message: "expected literal".into(),
            }),
        }
    }

    fn parse_predicate(&mut self) -> Result<RawPredicate> {
        let col = self.parse_colref()?;
        if self.eat(&Token::Eq) {
            self.parse_literal()?;
            return Ok(RawPredicate {
                col,
                op: PredOp::Eq,
            });
        }
        if self.eat_keyword("BETWEEN") {
            self.parse_literal()?;
            self.expect_keyword("AND")?;
            self.parse_literal()?;
            return Ok(RawPredicate {
                col,
                op: PredOp::Range,
            });
        }
        if let Some(kw) = self.peek_keyword() {
            if matches!(kw.as_str(), "LIKE" | "IN" | "IS" | "NOT") {
                return Err(Error::Unsupported {
                    position: self.pos(),
                    construct: format!("{kw} predicate"),
                });
            }
        }
        Err(Error::Syntax {
            position: self.pos(),
            message: "expected = or BETWEEN after predicate column".into(),
        })
    }

    fn parse(mut self) -> Result<RawQuery> {
        self.expect_keyword("SELECT")?;
        let projected = self.parse_col_list()?;
        self.expect_keyword("FROM")?;
        let t1 = self.expect_ident("table")?;
        let mut tables = vec![t1];
        let mut join = None;
        for kw in ["INNER", "LEFT", "RIGHT", "OUTER", "CROSS"] {
            if self.peek_keyword().as_deref() == Some(kw) {
                return Err(Error::Unsupported {
                    position: self.pos(),
                    construct: format!("{kw} JOIN (only plain JOIN is supported)"),
                });
            }
        }
        if self.eat_keyword("JOIN") {
            let t2 = self.expect_ident("table")?;
            tables.push(t2);
            self.expect_keyword("ON")?;
            let a = self.parse_colref()?;
            if !self.eat(&Token::Eq) {
                return Err(Error::Syntax {
                    position: self.pos(),
                    message: "expected = in join condition".into(),
                });
            }
            let b = self.parse_colref()?;
            join = Some((a, b));
            if self.eat_keyword("JOIN") {
                return Err(Error::Unsupported {
                    position: self.pos(),
                    construct: "more than two tables".into(),
                });
            }
        }
        let mut predicates = Vec::new();
        if self.eat_keyword("WHERE") {
            predicates.push(self.parse_predicate()?);
            loop {
                if self.eat_keyword("AND") {
                    predicates.push(self.parse_predicate()?);
                } else if self.peek_keyword().as_deref() == Some("OR") {
                    return Err(Error::Unsupported {
                        position: self.pos(),
                        construct: "OR disjunction (only AND conjunctions are supported)".into(),
                    });
                } else {
                    break;
                }
            }
        }
        let mut group_by = Vec::new();
        if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            group_by = self.parse_col_list()?;
        }
        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            order_by = self.parse_col_list()?;
        }
        if self.idx < self.tokens.len() {
            let (tok, pos) = &self.tokens[self.idx];
            if let Token::Ident(s) = tok {
                let up = s.to_ascii_uppercase();
                if matches!(up.as_str(), "LIMIT" | "HAVING" | "UNION" | "OFFSET") {
                    return Err(Error::Unsupported {
                        position: *pos,
                        construct: format!("{up} clause"),
                    });
                }
            }
            return Err(Error::Syntax {
                position: *pos,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(RawQuery {
            projected,
            tables,
            join,
            predicates,
            group_by,
            order_by,
        })
    }
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "JOIN", "ON", "WHERE", "AND", "BETWEEN", "GROUP", "ORDER", "BY",
];

/// Resolves a raw column against the statement's declared tables.
fn resolve(
    raw: &RawCol,
    tables: &[String],
    catalog: &Catalog,
    role: ClauseRole,
) -> Result<ColumnRef> {
    if let Some(t) = &raw.table {
        if !tables.iter().any(|x| x == t) {
            return Err(Error::Schema(format!(
                "table '{}' is not referenced in the FROM clause",
                t
            )));
        }
        let stats = catalog.stats(t)?;
        stats.column(&raw.column)?;
        return Ok(ColumnRef::new(t.clone(), raw.column.clone(), role));
    }
    let mut owner = None;
    for t in tables {
        if catalog.stats(t)?.columns.contains_key(&raw.column) {
            if owner.is_some() {
                return Err(Error::Schema(format!(
                    "column '{}' is ambiguous between tables {:?}",
                    raw.column, tables
                )));
            }
            owner = Some(t.clone());
        }
    }
    match owner {
        Some(t) => Ok(ColumnRef::new(t, raw.column.clone(), role)),
        None => Err(Error::Schema(format!(
            "column '{}' does not exist on any referenced table",
            raw.column
        ))),
    }
}

/// Parses one statement into a [`LogicalQuery`] with default selectivities:
/// 1/distinct_count for equality predicates and
/// [`DEFAULT_RANGE_SELECTIVITY`] for range predicates.
pub fn parse_query(sql_text: &str, catalog: &Catalog, id: QueryId) -> Result<LogicalQuery> {
    let tokens = Lexer::lex(sql_text)?;
    let end = sql_text.len();
    let raw = Parser {
        tokens,
        idx: 0,
        end,
    }
    .parse()?;

    let tables: Vec<String> = raw.tables.iter().map(|(t, _)| t.clone()).collect();
    for (t, pos) in &raw.tables {
        catalog.stats(t).map_err(|_| Error::Syntax {
            position: *pos,
            message: format!("unknown table '{t}'"),
        })?;
    }
    if tables.len() == 2 && tables[0] == tables[1] {
        return Err(Error::Unsupported {
            position: 0,
            construct: "self-join".into(),
        });
    }

    let join_pred = match &raw.join {
        Some((a, b)) => {
            let ca = resolve(a, &tables, catalog, ClauseRole::Join)?;
            let cb = resolve(b, &tables, catalog, ClauseRole::Join)?;
            if ca.table == cb.table {
                return Err(Error::Schema(
                    "join condition must relate columns of the two different tables".into(),
                ));
            }
            // Keep the join pair in FROM-clause table order.
            if ca.table == tables[0] {
                Some((ca, cb))
            } else {
                Some((cb, ca))
            }
        }
        None => None,
    };

    let mut predicates = Vec::new();
    for p in &raw.predicates {
        let role = match p.op {
            PredOp::Eq => ClauseRole::FilterEq,
            PredOp::Range => ClauseRole::FilterRange,
        };
        let col = resolve(&p.col, &tables, catalog, role)?;
        let selectivity = match p.op {
            PredOp::Eq => {
                let d = catalog
                    .stats(&col.table)?
                    .column(&col.column)?
                    .distinct_count;
                1.0 / d as f64
            }
            PredOp::Range => DEFAULT_RANGE_SELECTIVITY,
        };
        predicates.push(Predicate {
            column: col,
            op: p.op,
            selectivity,
        });
    }

    let group_by = raw
        .group_by
        .iter()
        .map(|c| resolve(c, &tables, catalog, ClauseRole::GroupBy))
        .collect::<Result<Vec<_>>>()?;
    let order_by = raw
        .order_by
        .iter()
        .map(|c| resolve(c, &tables, catalog, ClauseRole::OrderBy))
        .collect::<Result<Vec<_>>>()?;
    let projected: BTreeSet<ColumnRef> = raw
        .projected
        .iter()
        .map(|c| resolve(c, &tables, catalog, ClauseRole::Projected))
        .collect::<Result<BTreeSet<_>>>()?;

    let mut q = LogicalQuery {
        id,
        weight: 1.0,
        tables,
        predicates,
        join_pred,
        group_by,
        order_by,
        projected,
        template_id: TemplateId(String::new()),
    };
    q.template_id = templatize(&q).template_id;
    Ok(q)
}

fn render(q: &LogicalQuery, literals: bool) -> String {
    let mut s = String::from("SELECT ");
    let proj: Vec<String> = q.projected.iter().map(|c| c.qualified()).collect();
    s.push_str(&proj.join(", "));
    s.push_str(" FROM ");
    s.push_str(&q.tables[0]);
    if let Some((a, b)) = &q.join_pred {
        s.push_str(&format!(
            " JOIN {} ON {} = {}",
            q.tables[1],
            a.qualified(),
            b.qualified()
        ));
    }
    if !q.predicates.is_empty() {
        s.push_str(" WHERE ");
        let parts: Vec<String> = q
            .predicates
            .iter()
            .map(|p| match p.op {
                PredOp::Eq => {
                    if literals {
                        format!("{} = {}", p.column.qualified(), sel_literal(p.selectivity))
                    } else {
                        format!("{} = ?", p.column.qualified())
                    }
                }
                PredOp::Range => {
                    if literals {
                        let lit = sel_literal(p.selectivity);
                        format!("{} BETWEEN {} AND {}", p.column.qualified(), lit, lit + 1)
                    } else {
                        format!("{} BETWEEN ? AND ?", p.column.qualified())
                    }
                }
            })
            .collect();
        s.push_str(&parts.join(" AND "));
    }
    if !q.group_by.is_empty() {
        let cols: Vec<String> = q.group_by.iter().map(|c| c.qualified()).collect();
        s.push_str(" GROUP BY ");
        s.push_str(&cols.join(", "));
    }
    if !q.order_by.is_empty() {
        let cols: Vec<String> = q.order_by.iter().map(|c| c.qualified()).collect();
        s.push_str(" ORDER BY ");
        s.push_str(&cols.join(", "));
    }
    s
}

// Literal rendering used only by pretty-printing; the value is arbitrary, so a
// stable function of the selectivity keeps round trips deterministic.
fn sel_literal(sel: f64) -> i64 {
    (sel * 1e6) as i64
}

/// Pretty-prints the query in the canonical grammar. Re-parsing the result
/// under the same catalog (and re-applying the same selectivity overrides)
/// yields an equal query.
pub fn pretty_print(q: &LogicalQuery) -> String {
    render(q, true)
}

/// Computes the query's template: literal-insensitive, structure-sensitive,
/// idempotent.
pub fn templatize(q: &LogicalQuery) -> QueryTemplate {
    let normalized_text = render(q, false);
    let template_id = TemplateId(format!("tpl_{:016x}", fnv64_str(&normalized_text)));
    let binding_slots = q
        .predicates
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.op))
        .collect();
    QueryTemplate {
        template_id,
        normalized_text,
        binding_slots,
    }
}

/// All indexable columns of the query: filter/join/group-by/order-by columns,
/// deduplicated per (table, column) keeping the highest-priority role.
pub fn extract_indexable_columns(q: &LogicalQuery) -> Vec<ColumnRef> {
    let mut out: Vec<ColumnRef> = Vec::new();
    let mut push = |c: ColumnRef| {
        if let Some(existing) = out
            .iter_mut()
            .find(|e| e.table == c.table && e.column == c.column)
        {
            if c.role.priority() < existing.role.priority() {
                existing.role = c.role;
            }
        } else {
            out.push(c);
        }
    };
    for p in &q.predicates {
        push(p.column.clone());
    }
    if let Some((a, b)) = &q.join_pred {
        push(a.clone());
        push(b.clone());
    }
    for c in &q.group_by {
        push(c.clone());
    }
    for c in &q.order_by {
        push(c.clone());
    }
    // Deterministic order: priority bucket first, then first appearance.
    let mut indexed: Vec<(usize, ColumnRef)> = out.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| a.role.priority().cmp(&b.role.priority()).then(ia.cmp(ib)));
    indexed.into_iter().map(|(_, c)| c).collect()
}

/// Applies per-predicate selectivity overrides (by predicate position).
pub fn apply_selectivity_overrides(q: &mut LogicalQuery, overrides: &[f64]) -> Result<()> {
    if overrides.len() > q.predicates.len() {
        return Err(Error::InvalidRequest(format!(
            "{} selectivity overrides given but query '{}' has {} predicates",
            overrides.len(),
            q.id,
            q.predicates.len()
        )));
    }
    for (p, s) in q.predicates.iter_mut().zip(overrides.iter()) {
        if !(*s > 0.0 && *s <= 1.0) {
            return Err(Error::InvalidRequest(format!(
                "selectivity override {s} out of range (0, 1] for query '{}'",
                q.id
            )));
        }
        p.selectivity = *s;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ColumnStats, TableStats};

    fn catalog() -> Catalog {
        let mk = |table: &str, rows: u64, cols: &[(&str, u64)]| TableStats {
            table: table.into(),
            rows,
            columns: cols
                .iter()
                .map(|(n, d)| {
                    (
                        n.to_string(),
                        ColumnStats {
                            width_bytes: 8,
                            distinct_count: *d,
                        },
                    )
                })
                .collect(),
        };
        Catalog::new([
            mk("t", 1000, &[("a", 100), ("b", 500), ("c", 10), ("x", 50)]),
            mk("t1", 2000, &[("k", 200), ("v", 100)]),
            mk("t2", 3000, &[("k", 300), ("d", 30)]),
        ])
        .unwrap()
    }

    fn parse(sql: &str) -> LogicalQuery {
        parse_query(sql, &catalog(), QueryId("q".into())).unwrap()
    }

    #[test]
    fn simple_select_with_filter_and_order() {
        let q = parse("SELECT a FROM t WHERE b = 5 ORDER BY c");
        assert_eq!(q.tables, vec!["t"]);
        assert_eq!(q.predicates.len(), 1);
        assert_eq!(q.predicates[0].column.column, "b");
        assert_eq!(q.predicates[0].op, PredOp::Eq);
        assert!((q.predicates[0].selectivity - 1.0 / 500.0).abs() < 1e-12);
        assert_eq!(q.order_by.len(), 1);
        assert_eq!(q.order_by[0].column, "c");
        assert_eq!(q.projected.len(), 1);
        assert_eq!(q.projected.iter().next().unwrap().column, "a");
    }

    #[test]
    fn bare_select_has_no_indexable_columns() {
        let q = parse("SELECT x FROM t");
        assert!(q.predicates.is_empty());
        assert!(extract_indexable_columns(&q).is_empty());
    }

    #[test]
    fn join_with_filter_assigns_roles() {
        let q = parse("SELECT v FROM t1 JOIN t2 ON t1.k = t2.k WHERE t2.d = 3");
        assert_eq!(q.tables, vec!["t1", "t2"]);
        let (a, b) = q.join_pred.as_ref().unwrap();
        assert_eq!((a.table.as_str(), a.column.as_str()), ("t1", "k"));
        assert_eq!((b.table.as_str(), b.column.as_str()), ("t2", "k"));
        assert_eq!(a.role, ClauseRole::Join);
        assert_eq!(q.predicates.len(), 1);
        assert_eq!(q.predicates[0].column.role, ClauseRole::FilterEq);
        assert_eq!(q.predicates[0].column.table, "t2");
        // selectivity = 1/distinct(d) = 1/30
        assert!((q.predicates[0].selectivity - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn range_predicate_gets_default_selectivity() {
        let q = parse("SELECT a FROM t WHERE b BETWEEN 1 AND 9");
        assert_eq!(q.predicates[0].op, PredOp::Range);
        assert_eq!(q.predicates[0].selectivity, DEFAULT_RANGE_SELECTIVITY);
    }

    #[test]
    fn indexable_columns_keep_highest_priority_role() {
        let q = parse("SELECT a FROM t WHERE b = 5 ORDER BY b");
        let cols = extract_indexable_columns(&q);
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].column, "b");
        assert_eq!(cols[0].role, ClauseRole::FilterEq);
    }

    #[test]
    fn indexable_columns_order_is_priority_then_appearance() {
        let q = parse("SELECT a FROM t WHERE c BETWEEN 1 AND 2 AND b = 5 GROUP BY x ORDER BY a");
        let cols = extract_indexable_columns(&q);
        let names: Vec<&str> = cols.iter().map(|c| c.column.as_str()).collect();
        assert_eq!(names, vec!["b", "c", "x", "a"]);
    }

    #[test]
    fn projected_only_columns_are_not_indexable() {
        let q = parse("SELECT a, x FROM t WHERE b = 1");
        let cols = extract_indexable_columns(&q);
        assert!(cols.iter().all(|c| c.column == "b"));
    }

    #[test]
    fn templates_are_literal_insensitive_and_structure_sensitive() {
        let a = parse("SELECT a FROM t WHERE b = 5");
        let b = parse("SELECT a FROM t WHERE b = 7");
        let c = parse("SELECT a FROM t WHERE c = 5");
        assert_eq!(a.template_id, b.template_id);
        assert_ne!(a.template_id, c.template_id);
        // Determinism.
        assert_eq!(templatize(&a), templatize(&a));
    }

    #[test]
    fn template_binding_slots_follow_predicate_order() {
        let q = parse("SELECT a FROM t WHERE b = 5 AND c BETWEEN 1 AND 2");
        let t = templatize(&q);
        assert_eq!(t.binding_slots, vec![(0, PredOp::Eq), (1, PredOp::Range)]);
        assert!(t.normalized_text.contains("t.b = ?"));
        assert!(t.normalized_text.contains("t.c BETWEEN ? AND ?"));
    }

    #[test]
    fn pretty_print_round_trips() {
        for sql in [
            "SELECT a FROM t WHERE b = 5 ORDER BY c",
            "SELECT v FROM t1 JOIN t2 ON t1.k = t2.k WHERE t2.d = 3",
            "SELECT a, c FROM t WHERE b BETWEEN 1 AND 9 GROUP BY c ORDER BY a",
            "SELECT x FROM t",
        ] {
            let q = parse(sql);
            let printed = pretty_print(&q);
            let q2 = parse_query(&printed, &catalog(), QueryId("q".into())).unwrap();
            assert_eq!(q, q2, "round trip failed for {sql}");
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_query("SELECT FROM t", &catalog(), QueryId("q".into())).unwrap_err();
        match err {
            Error::Syntax { position, .. } => assert_eq!(position, 7),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for (sql, needle) in [
            ("SELECT a FROM t WHERE b = 1 OR c = 2", "OR"),
            ("SELECT a FROM t LIMIT 5", "LIMIT"),
            ("SELECT * FROM t", "star"),
            ("SELECT a FROM t WHERE b < 5", "comparison"),
            (
                "SELECT a FROM t1 JOIN t2 ON t1.k = t2.k JOIN t1 ON 1 = 1",
                "two tables",
            ),
        ] {
            let err = parse_query(sql, &catalog(), QueryId("q".into())).unwrap_err();
            match err {
                Error::Unsupported { construct, .. } => {
                    assert!(
                        construct.to_lowercase().contains(&needle.to_lowercase()),
                        "{construct} should mention {needle}"
                    );
                }
                other => panic!("expected unsupported error for {sql}, got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_names_are_schema_errors() {
        assert!(matches!(
            parse_query("SELECT a FROM nope", &catalog(), QueryId("q".into())),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_query("SELECT zz FROM t", &catalog(), QueryId("q".into())),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ambiguous_bare_column_is_rejected() {
        // `k` exists on both t1 and t2.
        let err = parse_query(
            "SELECT v FROM t1 JOIN t2 ON t1.k = t2.k WHERE k = 1",
            &catalog(),
            QueryId("q".into()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn selectivity_overrides_apply_in_predicate_order() {
        let mut q = parse("SELECT a FROM t WHERE b = 5 AND c BETWEEN 1 AND 2");
        apply_selectivity_overrides(&mut q, &[0.25]).unwrap();
        assert_eq!(q.predicates[0].selectivity, 0.25);
        assert_eq!(q.predicates[1].selectivity, DEFAULT_RANGE_SELECTIVITY);
        assert!(apply_selectivity_overrides(&mut q, &[0.1, 0.2, 0.3]).is_err());
        assert!(apply_selectivity_overrides(&mut q, &[1.5]).is_err());
    }
}
