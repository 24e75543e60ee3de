//! The JSON-path subset used by store queries: root `$`, object member
//! steps, array index steps, and a terminal equality or existence test.
//!
//! Examples: `$.host.@name=n1`, `$.queue.jobs[0].id`, `$.partition.state=production`.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JsonPathError {
    #[error("path must start with '$': {0:?}")]
    MissingRoot(String),
    #[error("empty member name at offset {0}")]
    EmptyMember(usize),
    #[error("bad array index at offset {0}")]
    BadIndex(usize),
    #[error("unexpected character {ch:?} at offset {offset}")]
    Unexpected { ch: char, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStep {
    Member(String),
    Index(usize),
}

/// A compiled predicate: walk the steps, then either require existence or
/// compare the reached scalar to an expected value.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonPathPredicate {
    pub steps: Vec<PathStep>,
    /// `None` means existence test.
    pub expected: Option<Value>,
}

impl JsonPathPredicate {
    /// Parses `$.a.b[3].c` or `$.a.b=value`. The expected value is parsed as
    /// a JSON scalar when possible, else taken as a bare string.
    pub fn parse(text: &str) -> Result<Self, JsonPathError> {
        let (path_text, expected) = match text.split_once('=') {
            Some((p, v)) => (p, Some(parse_scalar(v))),
            None => (text, None),
        };
        let steps = parse_steps(path_text)?;
        Ok(JsonPathPredicate { steps, expected })
    }

    /// True iff the path resolves and (when an expected value is present)
    /// the reached value equals it.
    pub fn matches(&self, value: &Value) -> bool {
        let mut cur = value;
        for step in &self.steps {
            cur = match step {
                PathStep::Member(name) => match cur.get(name.as_str()) {
                    Some(v) => v,
                    None => return false,
                },
                PathStep::Index(i) => match cur.get(*i) {
                    Some(v) => v,
                    None => return false,
                },
            };
        }
        match &self.expected {
            None => true,
            Some(expected) => scalar_eq(cur, expected),
        }
    }
}

fn scalar_eq(actual: &Value, expected: &Value) -> bool {
    match (actual, expected) {
        (Value::Number(a), Value::Number(b)) => a.as_f64() == b.as_f64(),
        _ => actual == expected,
    }
}

fn parse_scalar(text: &str) -> Value {
    match serde_json::from_str::<Value>(text) {
        Ok(v @ (Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_))) => v,
        _ => Value::String(text.to_string()),
    }
}

fn parse_steps(text: &str) -> Result<Vec<PathStep>, JsonPathError> {
    let mut chars = text.char_indices().peekable();
    match chars.next() {
        Some((_, '$')) => {}
        _ => return Err(JsonPathError::MissingRoot(text.to_string())),
    }
    let mut steps = Vec::new();
    while let Some((offset, ch)) = chars.next() {
        match ch {
            '.' => {
                let mut member = String::new();
                while let Some((_, c)) = chars.peek() {
                    if *c == '.' || *c == '[' {
                        break;
                    }
                    member.push(*c);
                    chars.next();
                }
                if member.is_empty() {
                    return Err(JsonPathError::EmptyMember(offset));
                }
                steps.push(PathStep::Member(member));
            }
            '[' => {
                let mut digits = String::new();
                let mut closed = false;
                for (_, c) in chars.by_ref() {
                    if c == ']' {
                        closed = true;
                        break;
                    }
                    digits.push(c);
                }
                if !closed || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(JsonPathError::BadIndex(offset));
                }
                steps.push(PathStep::Index(digits.parse().map_err(|_| JsonPathError::BadIndex(offset))?));
            }
            other => {
                return Err(JsonPathError::Unexpected {
                    ch: other,
                    offset,
                })
            }
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_members_and_indexes() {
        let p = JsonPathPredicate::parse("$.host.@name").unwrap();
        assert_eq!(
            p.steps,
            vec![PathStep::Member("host".into()), PathStep::Member("@name".into())]
        );
        assert_eq!(p.expected, None);

        let p = JsonPathPredicate::parse("$.queue.jobs[2].id=j7").unwrap();
        assert_eq!(
            p.steps,
            vec![
                PathStep::Member("queue".into()),
                PathStep::Member("jobs".into()),
                PathStep::Index(2),
                PathStep::Member("id".into()),
            ]
        );
        assert_eq!(p.expected, Some(Value::String("j7".into())));
    }

    #[test]
    fn equality_and_existence_match() {
        let doc = json!({"host": {"@name": "n1", "metric": [{"v": 1}, {"v": 2}]}});
        assert!(JsonPathPredicate::parse("$.host.@name=n1").unwrap().matches(&doc));
        assert!(!JsonPathPredicate::parse("$.host.@name=n2").unwrap().matches(&doc));
        assert!(JsonPathPredicate::parse("$.host.metric[1].v=2").unwrap().matches(&doc));
        assert!(JsonPathPredicate::parse("$.host.metric").unwrap().matches(&doc));
        assert!(!JsonPathPredicate::parse("$.host.missing").unwrap().matches(&doc));
    }

    #[test]
    fn scalar_values_parse_as_json_when_possible() {
        assert_eq!(
            JsonPathPredicate::parse("$.a=42").unwrap().expected,
            Some(json!(42))
        );
        assert_eq!(
            JsonPathPredicate::parse("$.a=true").unwrap().expected,
            Some(json!(true))
        );
        assert_eq!(
            JsonPathPredicate::parse("$.a=\"quoted\"").unwrap().expected,
            Some(json!("quoted"))
        );
        assert_eq!(
            JsonPathPredicate::parse("$.a=bare-string").unwrap().expected,
            Some(json!("bare-string"))
        );
        // numeric equality crosses int/float representations
        let doc = json!({"a": 42.0});
        assert!(JsonPathPredicate::parse("$.a=42").unwrap().matches(&doc));
    }

    #[test]
    fn malformed_paths_fail() {
        for bad in ["", "host.name", "$..a", "$.a[", "$.a[x]", "$.", "$x"] {
            assert!(JsonPathPredicate::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn bare_root_matches_everything() {
        let p = JsonPathPredicate::parse("$").unwrap();
        assert!(p.matches(&json!({"any": 1})));
        assert!(p.matches(&json!(null)));
    }
}
