//! JSON documents and their canonical serialization.
//!
//! Every payload in the system is a JSON document. Comparisons, payload
//! sizes, and change detection all run over the canonical form: UTF-8,
//! object keys sorted lexicographically, no insignificant whitespace.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("invalid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("non-finite number rejected: {0}")]
    NonFinite(f64),
}

/// A tree-structured JSON value, the common representation language.
///
/// Wraps `serde_json::Value`; non-finite numbers cannot occur because
/// `serde_json::Number` has no representation for them and [`Document::from_f64`]
/// rejects them up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Document(Value);

impl Document {
    pub fn new(value: Value) -> Self {
        Document(value)
    }

    /// Parses UTF-8 JSON text.
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        Ok(Document(serde_json::from_str(text)?))
    }

    pub fn parse_bytes(bytes: &[u8]) -> Result<Self, DocumentError> {
        Ok(Document(serde_json::from_slice(bytes)?))
    }

    /// Converts a float to a JSON number, rejecting NaN and infinities.
    pub fn from_f64(value: f64) -> Result<Value, DocumentError> {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or(DocumentError::NonFinite(value))
    }

    pub fn value(&self) -> &Value {
        &self.0
    }

    pub fn into_value(self) -> Value {
        self.0
    }

    /// Canonical serialization: keys sorted, no whitespace, UTF-8.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        write_canonical(&self.0, &mut out);
        out
    }

    pub fn canonical_string(&self) -> String {
        // write_canonical only emits output produced by serde_json, which is UTF-8
        String::from_utf8(self.canonical_bytes()).expect("canonical JSON is UTF-8")
    }

    /// Byte length of the canonical serialization.
    pub fn canonical_len(&self) -> usize {
        self.canonical_bytes().len()
    }

    /// Looks up a member path like `["host", "@name"]`, returning `None` on any miss.
    pub fn get_path(&self, path: &[&str]) -> Option<&Value> {
        let mut cur = &self.0;
        for step in path {
            cur = cur.as_object()?.get(*step)?;
        }
        Some(cur)
    }
}

impl From<Value> for Document {
    fn from(value: Value) -> Self {
        Document(value)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            out.push(b'{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                // serde_json handles string escaping
                serde_json::to_writer(&mut *out, key).expect("string serialization");
                out.push(b':');
                write_canonical(&map[key.as_str()], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        scalar => {
            serde_json::to_writer(&mut *out, scalar).expect("scalar serialization");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_sorts_keys_and_strips_whitespace() {
        let doc = Document::parse(r#"{ "b": 1, "a": { "z": true, "m": [1, 2] } }"#).unwrap();
        assert_eq!(doc.canonical_string(), r#"{"a":{"m":[1,2],"z":true},"b":1}"#);
    }

    #[test]
    fn canonical_round_trips() {
        let doc = Document::new(json!({"host": {"@name": "n1", "vals": [0.5, null, "x"]}}));
        let reparsed = Document::parse(&doc.canonical_string()).unwrap();
        assert_eq!(doc, reparsed);
        assert_eq!(doc.canonical_bytes(), reparsed.canonical_bytes());
    }

    #[test]
    fn canonical_len_matches_bytes() {
        let docs = [
            json!({}),
            json!([]),
            json!({"a": 1}),
            json!({"b": {"c": [1, 2, 3], "d": "päivää"}, "a": null}),
            json!([{"x": 1.5}, [], {}, "s"]),
        ];
        for v in docs {
            let doc = Document::new(v);
            assert_eq!(doc.canonical_len(), doc.canonical_bytes().len());
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Document::from_f64(f64::NAN).is_err());
        assert!(Document::from_f64(f64::INFINITY).is_err());
        assert!(Document::from_f64(0.25).is_ok());
    }

    #[test]
    fn get_path_walks_objects() {
        let doc = Document::new(json!({"host": {"@name": "n1"}}));
        assert_eq!(doc.get_path(&["host", "@name"]), Some(&json!("n1")));
        assert_eq!(doc.get_path(&["host", "missing"]), None);
    }
}
