//! Run reports and the artifacts written next to them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

/// Bumped whenever a field of [`RunReport`] changes meaning.
pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equals,
    #[serde(rename = "in")]
    OneOf,
}

/// One pass/fail line. `pass` is recomputable from `value`, `relation` and
/// `bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub relation: Relation,
    pub bound: Value,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value: number(value),
            relation: Relation::AtMost,
            bound: number(bound),
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value: number(value),
            relation: Relation::AtLeast,
            bound: number(bound),
            pass: value >= bound,
        }
    }

    pub fn equals(name: impl Into<String>, value: impl Serialize, expected: impl Serialize) -> Self {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        let bound = serde_json::to_value(expected).unwrap_or(Value::Null);
        Self {
            name: name.into(),
            pass: value == bound,
            value,
            relation: Relation::Equals,
            bound,
        }
    }

    pub fn one_of<T: Serialize>(name: impl Into<String>, value: T, allowed: &[T]) -> Self {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        let bound = serde_json::to_value(allowed).unwrap_or(Value::Null);
        let pass = bound.as_array().is_some_and(|a| a.contains(&value));
        Self {
            name: name.into(),
            value,
            relation: Relation::OneOf,
            bound,
            pass,
        }
    }
}

/// Non-finite numbers become strings so the JSON stays valid and readable.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(v.to_string()), Value::Number)
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub tol_scale: f64,
    pub config: ExperimentConfig,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub tables: BTreeMap<String, Value>,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
    /// The only field allowed to differ between identical runs.
    pub timing: Timing,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join(REPORT_FILE), self.to_json())
    }
}

/// Report JSON with the `timing` field removed, for reproducibility
/// comparisons.
pub fn strip_timing(json: &str) -> Result<String, serde_json::Error> {
    let mut v: Value = serde_json::from_str(json)?;
    if let Value::Object(map) = &mut v {
        map.remove("timing");
    }
    serde_json::to_string_pretty(&v)
}

/// Minimal CSV writer: header plus rows of already formatted cells.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn cell(v: f64) -> String {
    format!("{v:e}")
}
