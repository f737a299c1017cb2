//! The JSON document format.
//!
//! A leaf is `{"mass": <decimal>, "mark": <optional>}`, an internal node is
//! `{"height": <decimal>, "children": [...]}` and the null space is `null`.
//! Decimals are read and written exactly. A marked document wraps the tree
//! as `{"mark_space": <space>, "tree": <node>}`, where the space is
//! `{"alphabet": [...], "neutral": <symbol>}` or `{"box": {"lower": [...], "upper": [...]}}`.
//! Batches are one document per line.

use std::str::FromStr;

use serde_json::{json, Map, Number, Value};

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, Dendrogram, Mark, Node};
use crate::error::{Error, Result};
use crate::marked::{MarkSpace, MarkedDendrogram};

fn fail(path: &str, msg: impl Into<String>) -> Error {
    Error::Format(format!("{path}: {}", msg.into()))
}

fn decimal(v: &Value, path: &str) -> Result<Dec> {
    match v {
        Value::Number(n) => Dec::from_str(&n.to_string()).map_err(|e| fail(path, e.to_string())),
        Value::String(s) => Dec::from_str(s).map_err(|e| fail(path, e.to_string())),
        _ => Err(fail(path, "expected a decimal number")),
    }
}

fn number(x: Dec) -> Value {
    Value::Number(Number::from_str(&x.to_string()).expect("decimal display is a JSON number"))
}

fn mark_from(v: &Value, path: &str) -> Result<Mark> {
    serde_json::from_value(v.clone()).map_err(|_| fail(path, "mark must be a string or an integer array"))
}

fn node_from(v: &Value, path: &str) -> Result<Node> {
    let obj = v.as_object().ok_or_else(|| fail(path, "expected an object"))?;
    match (obj.get("mass"), obj.get("height")) {
        (Some(m), None) => {
            if let Some(k) = obj.keys().find(|k| *k != "mass" && *k != "mark") {
                return Err(fail(path, format!("unexpected leaf field {k:?}")));
            }
            let mark = match obj.get("mark") {
                None | Some(Value::Null) => None,
                Some(mk) => Some(mark_from(mk, &format!("{path}.mark"))?),
            };
            Ok(Node::Leaf {
                mass: decimal(m, &format!("{path}.mass"))?,
                mark,
            })
        }
        (None, Some(h)) => {
            if let Some(k) = obj.keys().find(|k| *k != "height" && *k != "children") {
                return Err(fail(path, format!("unexpected node field {k:?}")));
            }
            let kids = obj
                .get("children")
                .and_then(Value::as_array)
                .ok_or_else(|| fail(path, "internal node needs a children array"))?;
            Ok(Node::Internal {
                height: decimal(h, &format!("{path}.height"))?,
                children: kids
                    .iter()
                    .enumerate()
                    .map(|(i, c)| node_from(c, &format!("{path}.children[{i}]")))
                    .collect::<Result<_>>()?,
            })
        }
        _ => Err(fail(path, "node needs exactly one of \"mass\" or \"height\"")),
    }
}

/// Parses a tree value without canonicalizing it, so that structural
/// problems can still be reported by validation.
pub fn dendrogram_from_value(v: &Value) -> Result<Dendrogram> {
    match v {
        Value::Null => Ok(Dendrogram::null()),
        _ => Ok(Dendrogram::from_root(node_from(v, "$")?)),
    }
}

pub fn node_to_value(n: &Node) -> Value {
    match n {
        Node::Leaf { mass, mark } => {
            let mut obj = Map::new();
            obj.insert("mass".into(), number(*mass));
            if let Some(m) = mark {
                obj.insert("mark".into(), serde_json::to_value(m).unwrap_or(Value::Null));
            }
            Value::Object(obj)
        }
        Node::Internal { height, children } => {
            let mut obj = Map::new();
            obj.insert("height".into(), number(*height));
            obj.insert("children".into(), Value::Array(children.iter().map(node_to_value).collect()));
            Value::Object(obj)
        }
    }
}

pub fn dendrogram_to_value(d: &Dendrogram) -> Value {
    d.root().map_or(Value::Null, node_to_value)
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid JSON: {e}")))
}

/// Reads a dendrogram document as written, without canonicalization.
pub fn parse_dendrogram(text: &str) -> Result<Dendrogram> {
    let v = parse_json(text)?;
    if v.get("tree").is_some() {
        return Ok(parse_marked_value(&v)?.tree().clone());
    }
    dendrogram_from_value(&v)
}

/// Compact single-line document of the canonical form.
pub fn write_dendrogram(d: &Dendrogram) -> Result<String> {
    Ok(dendrogram_to_value(&canonicalize(d)?).to_string())
}

pub fn write_dendrogram_pretty(d: &Dendrogram) -> Result<String> {
    serde_json::to_string_pretty(&dendrogram_to_value(&canonicalize(d)?)).map_err(|e| Error::Format(e.to_string()))
}

pub fn mark_space_to_value(s: &MarkSpace) -> Value {
    match s {
        MarkSpace::Alphabet { symbols, neutral } => json!({ "alphabet": symbols, "neutral": neutral }),
        MarkSpace::LatticeBox { lower, upper } => json!({ "box": { "lower": lower, "upper": upper } }),
    }
}

pub fn mark_space_from_value(v: &Value) -> Result<MarkSpace> {
    let path = "$.mark_space";
    if let Some(a) = v.get("alphabet") {
        let symbols: Vec<String> =
            serde_json::from_value(a.clone()).map_err(|_| fail(path, "alphabet must be a string array"))?;
        let neutral = match v.get("neutral") {
            Some(n) => n.as_str().ok_or_else(|| fail(path, "neutral must be a string"))?.to_string(),
            None => symbols.first().cloned().unwrap_or_default(),
        };
        let s = MarkSpace::Alphabet { symbols, neutral };
        s.check()?;
        Ok(s)
    } else if let Some(b) = v.get("box") {
        let bounds = |k: &str| -> Result<Vec<i64>> {
            serde_json::from_value(b.get(k).cloned().unwrap_or(Value::Null))
                .map_err(|_| fail(path, format!("box.{k} must be an integer array")))
        };
        MarkSpace::lattice_box(bounds("lower")?, bounds("upper")?)
    } else {
        Err(fail(path, "expected \"alphabet\" or \"box\""))
    }
}

fn parse_marked_value(v: &Value) -> Result<MarkedDendrogram> {
    let space = mark_space_from_value(v.get("mark_space").ok_or_else(|| fail("$", "missing mark_space"))?)?;
    let tree = dendrogram_from_value(v.get("tree").ok_or_else(|| fail("$", "missing tree"))?)?;
    MarkedDendrogram::new(space, &tree)
}

pub fn parse_marked(text: &str) -> Result<MarkedDendrogram> {
    parse_marked_value(&parse_json(text)?)
}

pub fn write_marked(d: &MarkedDendrogram) -> String {
    json!({ "mark_space": mark_space_to_value(d.space()), "tree": dendrogram_to_value(d.tree()) }).to_string()
}

/// One document per nonempty line.
pub fn parse_batch(text: &str) -> Result<Vec<Dendrogram>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_dendrogram(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn write_batch(ds: &[Dendrogram]) -> Result<String> {
    let mut out = String::new();
    for d in ds {
        out.push_str(&write_dendrogram(d)?);
        out.push('\n');
    }
    Ok(out)
}
