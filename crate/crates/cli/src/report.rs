use serde::Serialize;
use serde_json::Value;

use crate::cli::Format;

pub const REPORT_VERSION: &str = "quadhedge-report/1";

/// Everything that determines a report except where it is written.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub input: Option<String>,
    pub capital: Vec<String>,
    pub random: Option<usize>,
    pub mode: quadhedge::Mode,
    pub eps_deg: f64,
    pub check_tol: f64,
    pub seed: u64,
    pub format: Format,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub config: RunConfig,
    pub results: Value,
    pub diagnostics: Value,
    pub failures: Vec<Value>,
    #[serde(skip)]
    pub table: Table,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            version: REPORT_VERSION,
            config,
            results: Value::Null,
            diagnostics: Value::Null,
            failures: Vec::new(),
            table: Table::default(),
        }
    }

    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn render(&self, format: Format) -> anyhow::Result<String> {
        match format {
            Format::Json => {
                let mut text = serde_json::to_string_pretty(self)?;
                text.push('\n');
                Ok(text)
            }
            Format::Csv => self.table.to_csv(),
        }
    }
}

/// Flat per-record view used for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
