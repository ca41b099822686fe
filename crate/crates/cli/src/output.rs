//! Self-describing CSV / JSON artifacts.
//!
//! Every CSV starts with `# schema: …` and `# config: {…}` comment lines; every
//! JSON document is `{"schema", "config", "result"}`. Nothing time-dependent
//! is written, so re-running with the embedded config reproduces the file
//! byte for byte.

use crate::args::Format;
use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Schema tag of a command's output.
pub fn schema(command: &str, columns: Option<&[String]>) -> String {
    let tag = format!("tensorspike/{}/v1", command.replace(' ', "-"));
    match columns {
        Some(cols) => format!("{tag} columns={}", cols.join(",")),
        None => tag,
    }
}

/// A CSV table with a fixed header.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self::with_columns(columns.iter().map(|c| c.to_string()).collect())
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, command: &str, config: &Value) -> String {
        let mut s = String::new();
        writeln!(s, "# schema: {}", schema(command, Some(&self.columns))).unwrap();
        writeln!(s, "# config: {}", serde_json::to_string(config).unwrap()).unwrap();
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            writeln!(s, "{}", row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",")).unwrap();
        }
        s
    }

    /// Rows as JSON objects keyed by column (numbers stay numbers).
    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::Map::new();
                    for (c, v) in self.columns.iter().zip(row) {
                        let val = if v.is_empty() {
                            Value::Null
                        } else {
                            v.parse::<f64>()
                                .ok()
                                .filter(|x| x.is_finite())
                                .and_then(|x| serde_json::Number::from_f64(x).map(Value::Number))
                                .unwrap_or_else(|| Value::String(v.clone()))
                        };
                        obj.insert(c.clone(), val);
                    }
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

fn quote(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

/// Formats a float for CSV; `None` / non-finite become empty or `inf`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Result of a command, renderable in either format.
pub enum Output {
    Table(Table),
    Json(Value),
    /// A table plus structured extras (extras only appear in JSON).
    Both(Table, Value),
}

impl Output {
    pub fn json<T: Serialize>(v: &T) -> Result<Self> {
        Ok(Output::Json(serde_json::to_value(v)?))
    }

    pub fn render(&self, command: &str, config: &Value, format: Format) -> Result<String> {
        match (self, format) {
            (Output::Table(t) | Output::Both(t, _), Format::Csv) => Ok(t.render(command, config)),
            (Output::Json(v), Format::Csv) => {
                // Flatten a JSON result into key,value rows.
                let mut t = Table::new(&["key", "value"]);
                flatten("", v, &mut t);
                Ok(t.render(command, config))
            }
            (out, Format::Json) => {
                let result = match out {
                    Output::Table(t) => t.to_json(),
                    Output::Json(v) => v.clone(),
                    Output::Both(t, extra) => {
                        let mut obj = serde_json::Map::new();
                        obj.insert("rows".into(), t.to_json());
                        if let Value::Object(m) = extra {
                            obj.extend(m.clone());
                        }
                        Value::Object(obj)
                    }
                };
                let doc = serde_json::json!({
                    "schema": schema(command, None),
                    "config": config,
                    "result": result,
                });
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
        }
    }
}

fn flatten(prefix: &str, v: &Value, t: &mut Table) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, t);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, t);
            }
        }
        Value::Null => t.push(vec![prefix.to_string(), String::new()]),
        Value::String(s) => t.push(vec![prefix.to_string(), s.clone()]),
        other => t.push(vec![prefix.to_string(), other.to_string()]),
    }
}

/// Writes to `path`, or stdout when `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
