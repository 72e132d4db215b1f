//! Run reports and CSV plot data.
//!
//! Reports serialize with sorted keys and fixed float formatting so that
//! identical runs give identical bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `"< 0.01"`.
    pub tolerance: String,
    pub pass: bool,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64, tolerance: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: tolerance.into(),
            pass,
        }
    }

    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("< {bound}"), value < bound)
    }

    pub fn above(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("> {bound}"), value > bound)
    }

    pub fn equals(name: impl Into<String>, value: f64, target: f64) -> Self {
        Self::new(name, value, format!("= {target}"), value == target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Report {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            tool: "nbshift".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config,
            metrics: Vec::new(),
            artifacts: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    pub fn all_pass(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Pretty JSON with a trailing newline. Non-finite values become `null`.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// One `name,value,tolerance,pass` row per metric.
    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "value", "tolerance", "pass"])?;
        for m in &self.metrics {
            w.write_record([m.name.clone(), format!("{}", m.value), m.tolerance.clone(), m.pass.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// A named list of `(x, y)` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

/// Writes series as CSV with header `series,x,y`. Floats use the shortest
/// representation that round-trips.
pub fn emit_plot_data<W: Write>(series: &[Series], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "x", "y"])?;
    for s in series {
        for (x, y) in &s.points {
            w.write_record([s.name.as_str(), &x.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`emit_plot_data`]; series come back in first-appearance order.
pub fn parse_plot_data<R: Read>(input: R) -> Result<Vec<Series>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["series", "x", "y"] {
        return Err(Error::Config(format!("unexpected plot header {headers:?}")));
    }
    let mut out: Vec<Series> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad number {:?}", &rec[i])))
        };
        let point = (parse(1)?, parse(2)?);
        match out.iter_mut().find(|s| s.name == rec[0]) {
            Some(s) => s.points.push(point),
            None => out.push(Series::new(&rec[0], vec![point])),
        }
    }
    Ok(out)
}
