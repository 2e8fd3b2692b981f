//! `summary.json`: every number carries a provenance tag, keys are sorted
//! (serde_json maps are ordered), and nothing run-dependent such as wall
//! time is written, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    /// Taken from the configuration.
    Input,
    /// Computed by a run.
    Measured,
    /// Closed form or stated value.
    Reference,
    /// Output of a fit.
    Fitted,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Input => "input",
            Tag::Measured => "measured",
            Tag::Reference => "reference",
            Tag::Fitted => "fitted",
        }
    }
}

fn number(x: f64) -> Value {
    // JSON has no inf/nan; keep them as strings instead of silently nulling.
    if x == 0.0 {
        json!(0.0) // no "-0.0" in summaries
    } else if x.is_finite() {
        json!(x)
    } else {
        json!(hardy_vss::io::fmt_g17(x))
    }
}

pub fn num(x: f64, tag: Tag) -> Value {
    json!({ "provenance": tag.as_str(), "value": number(x) })
}

pub fn nums(xs: &[f64], tag: Tag) -> Value {
    json!({ "provenance": tag.as_str(), "values": xs.iter().map(|&x| number(x)).collect::<Vec<_>>() })
}

/// Serializes `v` and replaces every number (or array of numbers) by a tagged one.
pub fn tagged<T: Serialize>(v: &T, tag: Tag) -> Value {
    tag_value(serde_json::to_value(v).expect("plain data serializes"), tag)
}

fn tag_value(v: Value, tag: Tag) -> Value {
    match v {
        Value::Number(n) => json!({ "provenance": tag.as_str(), "value": n }),
        Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_number) => {
            json!({ "provenance": tag.as_str(), "values": items })
        }
        Value::Array(items) => Value::Array(items.into_iter().map(|x| tag_value(x, tag)).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, x)| (k, tag_value(x, tag))).collect()),
        other => other,
    }
}

pub fn write_summary(dir: &Path, summary: &Map<String, Value>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(dir.join("summary.json"), text + "\n").with_context(|| format!("writing summary.json in {}", dir.display()))
}

/// A numeric or textual leaf of a summary, by dotted path.
#[derive(Debug, Clone, PartialEq)]
enum Leaf {
    Numbers { provenance: String, values: Vec<f64> },
    Text(String),
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Leaf>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) if m.contains_key("provenance") && (m.contains_key("value") || m.contains_key("values")) => {
            let provenance = m["provenance"].as_str().unwrap_or("").to_string();
            let parse = |x: &Value| x.as_f64().or_else(|| x.as_str().and_then(|s| s.parse().ok())).unwrap_or(f64::NAN);
            let values = match (m.get("value"), m.get("values")) {
                (Some(x), _) => vec![parse(x)],
                (_, Some(Value::Array(xs))) => xs.iter().map(parse).collect(),
                _ => vec![],
            };
            out.insert(prefix.to_string(), Leaf::Numbers { provenance, values });
        }
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&join(k), x, out)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&join(&i.to_string()), x, out)),
        Value::Null => {}
        other => {
            out.insert(prefix.to_string(), Leaf::Text(other.to_string().trim_matches('"').to_string()));
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldDiff {
    pub path: String,
    pub provenance: String,
    pub max_abs: f64,
    pub max_rel: f64,
    pub within_tolerance: bool,
    /// Differences in configuration inputs are parameter changes, not errors.
    pub parameter_change: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub experiment: String,
    pub rtol: f64,
    pub fields_compared: usize,
    pub differences: Vec<FieldDiff>,
    /// Paths present in only one run, or whose text differs.
    pub structural: Vec<String>,
    pub within_tolerance: bool,
}

fn load(dir: &Path) -> anyhow::Result<Value> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Field-by-field diff of two summaries of the same experiment type. A
/// field is within tolerance when `|a - b| <= rtol · max(|a|, |b|)` for every entry.
pub fn compare_runs(dir_a: &Path, dir_b: &Path, rtol: f64) -> anyhow::Result<CompareReport> {
    let (a, b) = (load(dir_a)?, load(dir_b)?);
    let experiment = |v: &Value| v.get("experiment").and_then(Value::as_str).map(String::from);
    let (ea, eb) = (experiment(&a), experiment(&b));
    let experiment = match (ea, eb) {
        (Some(x), Some(y)) if x == y => x,
        (x, y) => bail!("SchemaMismatch: experiment types {x:?} and {y:?} differ"),
    };
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    flatten("", &a, &mut fa);
    flatten("", &b, &mut fb);
    let mut differences = vec![];
    let mut structural = vec![];
    let mut compared = 0;
    for (path, la) in &fa {
        let Some(lb) = fb.get(path) else {
            structural.push(format!("only in first: {path}"));
            continue;
        };
        match (la, lb) {
            (Leaf::Numbers { provenance, values: va }, Leaf::Numbers { values: vb, .. }) if va.len() == vb.len() => {
                compared += 1;
                let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
                let mut ok = true;
                for (x, y) in va.iter().zip(vb) {
                    if x.to_bits() == y.to_bits() {
                        continue;
                    }
                    let d = (x - y).abs();
                    let scale = x.abs().max(y.abs());
                    max_abs = max_abs.max(d);
                    max_rel = max_rel.max(if scale > 0.0 { d / scale } else { f64::INFINITY });
                    ok &= d <= rtol * scale;
                }
                if max_abs > 0.0 || !ok {
                    differences.push(FieldDiff {
                        path: path.clone(),
                        provenance: provenance.clone(),
                        max_abs,
                        max_rel,
                        within_tolerance: ok,
                        parameter_change: provenance == Tag::Input.as_str(),
                    });
                }
            }
            (x, y) if x == y => compared += 1,
            _ => structural.push(format!("differs: {path}")),
        }
    }
    structural.extend(fb.keys().filter(|k| !fa.contains_key(*k)).map(|k| format!("only in second: {k}")));
    let within_tolerance = differences.iter().all(|d| d.within_tolerance || d.parameter_change) && structural.is_empty();
    Ok(CompareReport { experiment, rtol, fields_compared: compared, differences, structural, within_tolerance })
}
