//! Library side of the `fiedler` command: bandwidth policies, the staged
//! pipeline and the benchmark sweep.

pub mod pipeline;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use fiedler_seriation::recover::{select_bandwidth, slope_bandwidth};
use fiedler_seriation::{CurveKind, DataMatrix, KernelParams};
use serde::Serialize;

/// How the kernel bandwidth is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Bandwidth {
    Sigma { sigma: f64 },
    Sigma2 { sigma2: f64 },
    /// Rate-based rule with a user-supplied noise level.
    Auto { noise_level: f64 },
    /// Data-driven heuristic.
    Slope,
}

impl Bandwidth {
    pub fn resolve(&self, z: &DataMatrix, kind: CurveKind) -> fiedler_seriation::Result<KernelParams> {
        match *self {
            Bandwidth::Sigma { sigma } => KernelParams::new(sigma),
            Bandwidth::Sigma2 { sigma2 } => KernelParams::from_sigma2(sigma2),
            Bandwidth::Auto { noise_level } => select_bandwidth(z.len(), noise_level, kind),
            Bandwidth::Slope => slope_bandwidth(z),
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Sigma { sigma } => write!(f, "sigma={sigma}"),
            Bandwidth::Sigma2 { sigma2 } => write!(f, "sigma2={sigma2}"),
            Bandwidth::Auto { noise_level } => write!(f, "auto(eps={noise_level})"),
            Bandwidth::Slope => f.write_str("slope"),
        }
    }
}

/// Output format for summaries printed to stdout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format '{s}', expected csv or json")),
        }
    }
}

/// Float formatting used in every emitted file: 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    fiedler_seriation::io::format_float(v)
}

/// Pretty JSON whose floats carry 17 significant digits, like the CSV files.
pub fn to_json(value: &serde_json::Value) -> String {
    let mut out = String::new();
    write_json(value, 0, &mut out);
    out
}

fn write_json(value: &serde_json::Value, depth: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |d: usize| "  ".repeat(d);
    match value {
        Value::Number(n) if n.is_f64() => out.push_str(&fmt_float(n.as_f64().expect("f64"))),
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_json(v, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(k).expect("string key"));
                out.push_str(": ");
                write_json(v, depth + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Renders a flat JSON object either as JSON or as a two-line CSV.
pub fn render(value: &serde_json::Value, format: Format) -> String {
    match format {
        Format::Json => to_json(value),
        Format::Csv => {
            let obj = value.as_object().expect("flat object");
            let header: Vec<&str> = obj.keys().map(String::as_str).collect();
            let row: Vec<String> = obj
                .values()
                .map(|v| match v {
                    serde_json::Value::Number(n) if n.is_f64() => fmt_float(n.as_f64().expect("f64")),
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                })
                .collect();
            format!("{}\n{}", header.join(","), row.join(","))
        }
    }
}
