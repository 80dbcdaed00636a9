//! JSON weight files and result dumps.
//!
//! A weight row is either `{"p": {"1": 0.3, ...}}`, giving the probability
//! of each variable being true (its negative literal gets `1 - p`), or
//! `{"w": {"1": a, "-1": b, ...}}`, giving every literal's value directly.
//! A file holds one row or an array of rows (a batch). Values may be JSON
//! numbers or the strings `"inf"`, `"-inf"` and `"nan"`.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::Deserialize;
use serde_json::{json, Value};

use super::EvalError;
use crate::circuit::Literal;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum LiteralWeights {
    /// Probability of each variable being true.
    Probabilities(BTreeMap<u32, f64>),
    /// Value of each literal.
    Explicit(BTreeMap<Literal, f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    p: Option<BTreeMap<String, Value>>,
    w: Option<BTreeMap<String, Value>>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError::WeightFormat(msg.into()))
}

fn number(key: &str, v: &Value) -> Result<f64, EvalError> {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| format_err(format!("{key}: {n} is not a float")), Ok),
        Value::String(s) => s.parse().or_else(|_| format_err(format!("{key}: `{s}` is not a number"))),
        other => format_err(format!("{key}: expected a number, found {other}")),
    }
}

fn literal(key: &str) -> Result<Literal, EvalError> {
    key.trim()
        .parse::<i64>()
        .ok()
        .and_then(Literal::from_dimacs)
        .map_or_else(|| format_err(format!("`{key}` is not a literal")), Ok)
}

impl LiteralWeights {
    fn from_raw(raw: RawRow) -> Result<Self, EvalError> {
        match (raw.p, raw.w) {
            (Some(p), None) => {
                let mut out = BTreeMap::new();
                for (key, v) in &p {
                    let lit = literal(key)?;
                    if !lit.is_positive() {
                        return format_err(format!("probability key `{key}` must be a positive variable"));
                    }
                    let prob = number(key, v)?;
                    if !(0.0..=1.0).contains(&prob) {
                        return format_err(format!("probability {prob} for variable {key} is outside [0, 1]"));
                    }
                    out.insert(lit.variable(), prob);
                }
                Ok(LiteralWeights::Probabilities(out))
            }
            (None, Some(w)) => w
                .iter()
                .map(|(key, v)| Ok((literal(key)?, number(key, v)?)))
                .collect::<Result<_, _>>()
                .map(LiteralWeights::Explicit),
            _ => format_err("each row needs exactly one of `p` and `w`"),
        }
    }
}

/// Parses a weight file into one entry per batch row.
pub fn parse_weights_json(text: &str) -> Result<Vec<LiteralWeights>, EvalError> {
    let value: Value = serde_json::from_str(text)?;
    let raw: Vec<RawRow> = match value {
        Value::Array(_) => serde_json::from_value(value)?,
        _ => vec![serde_json::from_value(value)?],
    };
    if raw.is_empty() {
        return format_err("empty batch");
    }
    raw.into_iter().map(LiteralWeights::from_raw).collect()
}

/// A JSON number, or a string for values JSON cannot represent.
pub fn json_number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// `{"roots": ..., "grad": [[...]], "literals": [...]}`.
///
/// `roots` is a flat list for a single row and a list of rows otherwise;
/// `grad` is always a list of rows, columns in input-slot order, and
/// `literals` names the literal of each column.
pub fn dump_json<T: Scalar>(outputs: ArrayView2<'_, T>, grad: Option<ArrayView2<'_, T>>, inputs: &[Literal]) -> Value {
    let rows = |a: ArrayView2<'_, T>| -> Vec<Value> {
        a.rows()
            .into_iter()
            .map(|r| Value::Array(r.iter().map(|x| json_number(x.to_f64_lossy())).collect()))
            .collect()
    };
    let mut roots = rows(outputs);
    let mut dump = serde_json::Map::new();
    dump.insert("roots".into(), if roots.len() == 1 { roots.remove(0) } else { Value::Array(roots) });
    if let Some(g) = grad {
        dump.insert("grad".into(), Value::Array(rows(g)));
        dump.insert("literals".into(), json!(inputs.iter().map(|l| l.to_dimacs()).collect::<Vec<_>>()));
    }
    Value::Object(dump)
}
