//! Tabular command output rendered as CSV or JSON.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Named columns and rows of JSON scalars (arrays allowed for vector cells).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(command: &str, columns: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    /// Columns from the field names of the first record, in declaration order.
    pub fn from_records<T: Serialize>(command: &str, records: &[T], fallback_columns: &[&str]) -> Result<Self> {
        let mut table = Table::new(command, fallback_columns);
        for (i, r) in records.iter().enumerate() {
            let Value::Object(map) = serde_json::to_value(r)? else {
                return Err(Error::Usage("records must serialize to objects".into()));
            };
            if i == 0 {
                table.columns = map.keys().cloned().collect();
            }
            table.rows.push(map.into_iter().map(|(_, v)| v).collect());
        }
        Ok(table)
    }

    pub fn write(&self, w: impl Write, format: Format) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(w),
            Format::Json => self.write_json(w),
        }
    }

    fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(csv_field))?;
        }
        out.flush()?;
        Ok(())
    }

    fn write_json(&self, mut w: impl Write) -> Result<()> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let map: Map<String, Value> = self.columns.iter().cloned().zip(r.iter().cloned()).collect();
                Value::Object(map)
            })
            .collect();
        let doc = serde_json::json!({
            "command": self.command,
            "columns": self.columns,
            "rows": rows,
        });
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        Ok(())
    }
}

fn csv_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(csv_field).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}
