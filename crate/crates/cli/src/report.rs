use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Result of one subcommand before it is wrapped into a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<(String, bool)>,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn new<T: Serialize>(results: &T) -> anyhow::Result<Self> {
        Ok(Self {
            results: strip_timing(serde_json::to_value(results)?),
            ..Self::default()
        })
    }

    pub fn check(mut self, name: &str, ok: bool) -> Self {
        self.checks.push((name.to_string(), ok));
        self
    }

    pub fn line(mut self, s: impl Into<String>) -> Self {
        self.summary.push(s.into());
        self
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

/// Drops the per-stage `runtime_s` fields so that only the top-level wall
/// time varies between identical runs.
fn strip_timing(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(k, _)| k != "runtime_s")
                .map(|(k, v)| (k, strip_timing(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.into_iter().map(strip_timing).collect()),
        other => other,
    }
}

pub fn build<C: Serialize>(
    command: &str,
    config: &C,
    outcome: Option<&Outcome>,
    error: Option<String>,
    wall_time_s: f64,
) -> anyhow::Result<Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), SCHEMA_VERSION.into());
    m.insert("command".into(), command.into());
    m.insert("config".into(), serde_json::to_value(config)?);
    if let Some(o) = outcome {
        m.insert("results".into(), o.results.clone());
        let checks: Map<String, Value> = o
            .checks
            .iter()
            .map(|(k, v)| (k.clone(), Value::Bool(*v)))
            .collect();
        m.insert("checks".into(), Value::Object(checks));
    }
    if let Some(e) = &error {
        m.insert("error".into(), e.clone().into());
    }
    let pass = error.is_none() && outcome.map(|o| o.pass()).unwrap_or(false);
    m.insert("pass".into(), pass.into());
    m.insert("wall_time_s".into(), wall_time_s.into());
    Ok(Value::Object(m))
}

pub fn write(path: &Path, report: &Value) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
