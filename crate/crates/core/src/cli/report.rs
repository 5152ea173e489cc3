//! Rendering command results as tables, JSON or CSV.

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (table, json, csv)")),
        }
    }
}

/// Columnar data attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub result: Map<String, Value>,
    pub rows: Option<Rows>,
    /// `Some(true)` for PASS, `Some(false)` for FAIL.
    pub status: Option<bool>,
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            result: Map::new(),
            rows: None,
            status: None,
        }
    }

    pub fn set(&mut self, key: &str, value: impl serde::Serialize) -> &mut Self {
        self.result
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.table(),
            Format::Json => self.json(),
            Format::Csv => self.csv(),
        }
    }

    fn json(&self) -> String {
        let mut result = Value::Object(self.result.clone());
        if let Some(rows) = &self.rows {
            let records: Vec<Value> = rows
                .rows
                .iter()
                .map(|r| Value::Object(rows.header.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect();
            result["rows"] = Value::Array(records);
        }
        let mut doc = json!({
            "schema_version": 1,
            "command": self.command,
            "config": self.config,
            "result": result,
        });
        if let Some(pass) = self.status {
            doc["status"] = json!(if pass { "PASS" } else { "FAIL" });
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    fn table(&self) -> String {
        let mut pairs = Vec::new();
        flatten("", &Value::Object(self.result.clone()), &mut pairs);
        if let Some(pass) = self.status {
            pairs.push(("status".into(), if pass { "PASS" } else { "FAIL" }.into()));
        }
        let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &pairs {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        if let Some(rows) = &self.rows {
            if !pairs.is_empty() {
                out.push('\n');
            }
            let cells: Vec<Vec<String>> = rows.rows.iter().map(|r| r.iter().map(scalar_text).collect()).collect();
            let widths: Vec<usize> = (0..rows.header.len())
                .map(|c| {
                    cells
                        .iter()
                        .map(|r| r[c].len())
                        .chain([rows.header[c].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |items: &[String]| {
                items
                    .iter()
                    .zip(&widths)
                    .map(|(s, &w)| format!("{s:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            out.push_str(&line(&rows.header));
            out.push('\n');
            for r in &cells {
                out.push_str(&line(r));
                out.push('\n');
            }
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        match &self.rows {
            Some(rows) => {
                out.push_str(&rows.header.join(","));
                out.push('\n');
                for r in &rows.rows {
                    out.push_str(&r.iter().map(csv_cell).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
            }
            None => {
                let mut pairs = Vec::new();
                flatten_values("", &Value::Object(self.result.clone()), &mut pairs);
                out.push_str("key,value\n");
                for (k, v) in pairs {
                    out.push_str(&format!("{k},{}\n", csv_cell(&v)));
                }
                if let Some(pass) = self.status {
                    out.push_str(&format!("status,{}\n", if pass { "PASS" } else { "FAIL" }));
                }
            }
        }
        out
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let mut vals = Vec::new();
    flatten_values(prefix, v, &mut vals);
    out.extend(vals.into_iter().map(|(k, v)| (k, scalar_text(&v))));
}

fn flatten_values(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten_values(&join(k), child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten_values(&join(&i.to_string()), child, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

/// Numbers with 17 significant digits; strings quoted when needed.
fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.16e}"),
            _ => n.to_string(),
        },
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Formats a float for CSV output.
pub fn csv_float(x: f64) -> String {
    csv_cell(&json!(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("demo", json!({"R": 1.0}));
        r.set("J", 0.125).set("nested", json!({"a": 1, "b": [2.5, null]}));
        r
    }

    #[test]
    fn json_has_schema_and_config() {
        let doc: Value = serde_json::from_str(&sample().render(Format::Json)).unwrap();
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["config"]["R"], 1.0);
        assert_eq!(doc["result"]["J"], 0.125);
    }

    #[test]
    fn table_matches_json_values() {
        let table = sample().render(Format::Table);
        let lines: Vec<Vec<&str>> = table.lines().map(|l| l.split_whitespace().collect()).collect();
        assert!(lines.contains(&vec!["J", "0.125"]), "{table}");
        assert!(lines.contains(&vec!["nested.b.0", "2.5"]));
        assert!(lines.contains(&vec!["nested.b.1", "-"]));
    }

    #[test]
    fn csv_digits() {
        assert_eq!(csv_float(0.1), "1.0000000000000001e-1");
        let mut r = sample();
        r.rows = Some(Rows {
            header: vec!["x".into(), "y".into()],
            rows: vec![vec![json!(1.5), json!(null)]],
        });
        assert_eq!(r.render(Format::Csv), "x,y\n1.5000000000000000e0,\n");
    }
}
