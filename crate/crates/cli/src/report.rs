//! Machine-readable run reports.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Significant digits kept for every number in a report.
pub const DIGITS: usize = 12;

/// Round to [`DIGITS`] significant digits; non-finite values become strings.
pub fn round_sig(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(x.to_string());
    }
    if x == 0.0 {
        return Value::from(0.0);
    }
    let s = format!("{:.*e}", DIGITS - 1, x);
    Value::from(s.parse::<f64>().expect("formatted float parses"))
}

/// Apply [`round_sig`] to every float in a JSON tree.
pub fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => round_sig(n.as_f64().expect("f64 number")),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: Value,
    pub observed: Value,
    pub tolerance: Value,
    pub pass: bool,
}

impl Check {
    /// `|observed − expected| ≤ tolerance`.
    pub fn close(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (observed - expected).abs() <= tolerance;
        Self::raw(
            name,
            round_sig(expected),
            round_sig(observed),
            round_sig(tolerance),
            pass,
        )
    }

    /// `observed ≤ bound`, for deviations and residuals.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::raw(
            name,
            Value::from(0.0),
            round_sig(observed),
            round_sig(bound),
            observed <= bound,
        )
    }

    /// A boolean condition; `detail` goes into `observed`.
    pub fn holds(name: impl Into<String>, pass: bool, detail: impl Into<Value>) -> Self {
        Self::raw(name, Value::Bool(true), detail.into(), Value::Null, pass)
    }

    pub fn raw(name: impl Into<String>, expected: Value, observed: Value, tolerance: Value, pass: bool) -> Self {
        Self {
            name: name.into(),
            expected,
            observed,
            tolerance,
            pass,
        }
    }
}

/// Optional tabular payload written by `--csv`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub checks: Vec<Check>,
    pub data: Map<String, Value>,
    pub wall_time_s: f64,
    pub table: Option<Table>,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            checks: Vec::new(),
            data: Map::new(),
            wall_time_s: 0.0,
            table: None,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn data(&mut self, key: &str, v: impl Into<Value>) {
        self.data.insert(key.to_string(), v.into());
    }

    /// Conjunction of all checks; a report without checks does not pass.
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> Value {
        let mut o = Map::new();
        o.insert("schema".into(), SCHEMA_VERSION.into());
        o.insert("command".into(), self.command.clone().into());
        o.insert("seed".into(), self.seed.into());
        o.insert("config".into(), self.config.clone());
        o.insert(
            "checks".into(),
            serde_json::to_value(&self.checks).expect("checks serialize"),
        );
        o.insert("pass".into(), self.pass().into());
        o.insert("wall_time_s".into(), self.wall_time_s.into());
        o.insert("data".into(), Value::Object(self.data.clone()));
        round_value(Value::Object(o))
    }

    /// The parts of the JSON that must repeat under the same config and seed.
    pub fn reproducible_part(json: &Value) -> Value {
        let mut v = json.clone();
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_time_s");
        }
        v
    }

    /// Writes the table if present, otherwise one row per check.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        match &self.table {
            Some(t) => {
                out.write_record(&t.headers)?;
                for row in &t.rows {
                    out.write_record(row.iter().map(|v| match round_sig(*v) {
                        Value::String(s) => s,
                        n => n.to_string(),
                    }))?;
                }
            }
            None => {
                out.write_record(["name", "expected", "observed", "tolerance", "pass"])?;
                let cell = |v: &Value| match round_value(v.clone()) {
                    Value::String(s) => s,
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                for c in &self.checks {
                    out.write_record([
                        c.name.clone(),
                        cell(&c.expected),
                        cell(&c.observed),
                        cell(&c.tolerance),
                        c.pass.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}
