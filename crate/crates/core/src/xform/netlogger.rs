//! NetLogger `key=value` event lines to flat JSON objects.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::document::Document;
use crate::timeutil;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetLoggerError {
    #[error("malformed pair {pair:?}: expected key=value")]
    MalformedPair { pair: String },
    #[error("duplicate key {key:?}")]
    DuplicateKey { key: String },
    #[error("bad ts value {value:?}: {reason}")]
    BadTimestamp { value: String, reason: String },
}

/// Converts one NetLogger line into a flat JSON object. Values stay strings;
/// the `ts` value must parse as an RFC 3339 timestamp (it is kept in its
/// original string form). An empty line yields an empty object.
pub fn netlogger_to_json(line: &str) -> Result<Document, NetLoggerError> {
    let mut object = Map::new();
    for pair in line.split_whitespace() {
        let (key, value) = pair.split_once('=').ok_or_else(|| NetLoggerError::MalformedPair {
            pair: pair.to_string(),
        })?;
        if key.is_empty() {
            return Err(NetLoggerError::MalformedPair {
                pair: pair.to_string(),
            });
        }
        if object.contains_key(key) {
            return Err(NetLoggerError::DuplicateKey {
                key: key.to_string(),
            });
        }
        if key == "ts" {
            timeutil::parse_rfc3339_micros(value).map_err(|e| NetLoggerError::BadTimestamp {
                value: value.to_string(),
                reason: e.reason.to_string(),
            })?;
        }
        object.insert(key.to_string(), Value::String(value.to_string()));
    }
    Ok(Document::new(Value::Object(object)))
}
