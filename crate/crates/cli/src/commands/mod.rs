pub mod forecast;
pub mod generate;
pub mod train;
pub mod tune;

use std::fmt;
use std::path::Path;

use idxtune_core::error::Error as CoreError;
use idxtune_core::formats::{parse_sql_workload, SchemaFile, WorkloadFile};
use idxtune_core::ir::{Catalog, QueryId, Workload};

/// CLI failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub budget_infeasible: bool,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            budget_infeasible: false,
        }
    }

    pub fn budget(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            budget_infeasible: true,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.budget_infeasible {
            3
        } else {
            2
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BudgetExhausted => CliError::budget(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::validation(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::validation(format!("json error: {e}"))
    }
}

pub type CliResult = Result<(), CliError>;

pub fn load_schema(path: &Path) -> Result<Catalog, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read schema {}: {e}", path.display())))?;
    let schema: SchemaFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(schema.to_catalog()?)
}

/// Loads a `.json` or `.sql` workload. Returns arrival timestamps when the
/// file carries them.
pub fn load_workload(
    path: &Path,
    catalog: &Catalog,
) -> Result<(Workload, std::collections::BTreeMap<QueryId, u64>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read workload {}: {e}", path.display()))
    })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let wf: WorkloadFile = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            Ok(wf.parse(catalog)?)
        }
        Some("sql") => {
            let w = parse_sql_workload(&text, catalog)?;
            Ok((w, Default::default()))
        }
        other => Err(CliError::validation(format!(
            "workload file must end in .json or .sql, got {:?}",
            other
        ))),
    }
}
