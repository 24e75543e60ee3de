//! Key-column extraction from documents, and the snapshot/series split.

use serde_json::Value;
use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::timeutil;

/// Document kinds kept latest-only; everything else is appended as history.
pub const SNAPSHOT_KINDS: [&str; 3] = ["partition", "queue", "config"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentClass {
    /// At most one record per entity key; newer replaces older.
    Snapshot,
    /// Time-ordered history; subject to retention pruning.
    Series,
}

pub fn classify_kind(kind: &str) -> DocumentClass {
    if SNAPSHOT_KINDS.contains(&kind) {
        DocumentClass::Snapshot
    } else {
        DocumentClass::Series
    }
}

/// The extracted key columns stored beside each document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyFields {
    /// Source kind (`ganglia`, `glue2`, ...). Never empty.
    pub source: String,
    pub site: Option<String>,
    /// Resource name: node, link, partition, service.
    pub resource: Option<String>,
    /// Service or test name, where the source distinguishes one.
    pub service: Option<String>,
    /// Document kind (`metrics`, `queue`, `job.start`, ...). Never empty.
    pub kind: String,
    /// Event time in epoch microseconds, when the document carries one.
    pub event_time_micros: Option<u64>,
}

impl KeyFields {
    pub fn new(source: impl Into<String>, kind: impl Into<String>) -> Self {
        KeyFields {
            source: source.into(),
            site: None,
            resource: None,
            service: None,
            kind: kind.into(),
            event_time_micros: None,
        }
    }

    pub fn site(mut self, site: impl Into<String>) -> Self {
        self.site = Some(site.into());
        self
    }

    pub fn resource(mut self, resource: impl Into<String>) -> Self {
        self.resource = Some(resource.into());
        self
    }

    pub fn service(mut self, service: impl Into<String>) -> Self {
        self.service = Some(service.into());
        self
    }

    pub fn event_time(mut self, micros: u64) -> Self {
        self.event_time_micros = Some(micros);
        self
    }

    pub fn class(&self) -> DocumentClass {
        classify_kind(&self.kind)
    }

    /// Identity used for latest-only upserts and grouping.
    pub fn entity_key(&self) -> (String, Option<String>, Option<String>, Option<String>, String) {
        (
            self.source.clone(),
            self.site.clone(),
            self.resource.clone(),
            self.service.clone(),
            self.kind.clone(),
        )
    }
}

fn as_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Interprets a scalar as an event time: numbers are epoch seconds (with
/// optional fraction) unless large enough to already be micros; strings are
/// RFC 3339 or a numeric epoch (XML attributes arrive as strings).
fn as_event_time(value: &Value) -> Option<u64> {
    fn from_epoch(v: f64) -> Option<u64> {
        if v < 0.0 {
            None
        } else if v >= 1e14 {
            Some(v as u64) // already microseconds
        } else {
            Some((v * 1e6) as u64)
        }
    }
    match value {
        Value::Number(n) => from_epoch(n.as_f64()?),
        Value::String(s) => timeutil::parse_rfc3339_micros(s)
            .ok()
            .or_else(|| s.parse::<f64>().ok().and_then(from_epoch)),
        _ => None,
    }
}

/// Projects key columns out of a document produced by the transform
/// conventions. Total: missing fields yield empty optionals, never failure.
pub fn extract_keys(document: &Document, source: &str) -> KeyFields {
    let get = |path: &[&str]| document.get_path(path).cloned();
    let text = |path: &[&str]| get(path).as_ref().and_then(as_text);
    let time = |path: &[&str]| get(path).as_ref().and_then(as_event_time);

    let mut keys = match source {
        "ganglia" => {
            let mut k = KeyFields::new("ganglia", "metrics");
            k.site = text(&["host", "@site"]);
            k.resource = text(&["host", "@name"]);
            k.event_time_micros = time(&["host", "@reported"]);
            k
        }
        "inca" => {
            let mut k = KeyFields::new("inca", "test");
            k.site = text(&["report", "@site"]);
            k.resource = text(&["report", "@service"]);
            k.service = text(&["report", "@test"]);
            k.event_time_micros = time(&["report", "@completed"]);
            k
        }
        "perfsonar" => {
            let mut k = KeyFields::new("perfsonar", "bandwidth");
            let src = text(&["measurement", "@src"]);
            let dst = text(&["measurement", "@dst"]);
            k.resource = match (src, dst) {
                (Some(s), Some(d)) => Some(format!("{s}-{d}")),
                (s, d) => s.or(d),
            };
            k.event_time_micros = time(&["measurement", "@ts"]);
            k
        }
        "snapp" => {
            let mut k = KeyFields::new("snapp", "traffic");
            k.resource = text(&["link", "@id"]);
            k.event_time_micros = time(&["link", "ts"]);
            k
        }
        "glue2" => {
            if document.get_path(&["job"]).is_some() {
                let state = text(&["job", "state"]).unwrap_or_else(|| "update".to_string());
                let mut k = KeyFields::new("glue2", format!("job.{state}"));
                k.site = text(&["job", "@site"]);
                k.resource = text(&["job", "@partition"]);
                k.service = text(&["job", "@id"]);
                k.event_time_micros = time(&["job", "ts"]);
                k
            } else if document.get_path(&["queue"]).is_some() {
                let mut k = KeyFields::new("glue2", "queue");
                k.site = text(&["queue", "@site"]);
                k.resource = text(&["queue", "@name"]);
                k.event_time_micros = time(&["queue", "ts"]);
                k
            } else {
                let mut k = KeyFields::new("glue2", "partition");
                k.site = text(&["partition", "@site"]);
                k.resource = text(&["partition", "@name"]);
                k.event_time_micros = time(&["partition", "ts"]);
                k
            }
        }
        "netlogger" => {
            let mut k = KeyFields::new("netlogger", "log");
            k.site = None;
            k.resource = text(&["component"]);
            k.service = text(&["experiment"]);
            k.event_time_micros = time(&["ts"]);
            k
        }
        other => KeyFields::new(if other.is_empty() { "unknown" } else { other }, "document"),
    };
    if keys.kind.is_empty() {
        keys.kind = "document".to_string();
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ganglia_doc_projects_node_keys() {
        let doc = Document::new(json!({
            "host": {"@name": "node0042", "@site": "site01", "@reported": "1367402400",
                     "metric": [{"@name": "load_one", "@val": "0.5"}]}
        }));
        let keys = extract_keys(&doc, "ganglia");
        assert_eq!(keys.source, "ganglia");
        assert_eq!(keys.site.as_deref(), Some("site01"));
        assert_eq!(keys.resource.as_deref(), Some("node0042"));
        assert_eq!(keys.service, None);
        assert_eq!(keys.kind, "metrics");
        assert_eq!(keys.event_time_micros, Some(1_367_402_400_000_000));
        assert_eq!(keys.class(), DocumentClass::Series);
    }

    #[test]
    fn glue2_job_doc_projects_job_keys() {
        let doc = Document::new(json!({
            "job": {"@id": "j00001", "@partition": "part01", "@site": "site02",
                    "state": "start", "ts": 1_367_402_400}
        }));
        let keys = extract_keys(&doc, "glue2");
        assert_eq!(keys.kind, "job.start");
        assert_eq!(keys.site.as_deref(), Some("site02"));
        assert_eq!(keys.resource.as_deref(), Some("part01"));
        assert_eq!(keys.service.as_deref(), Some("j00001"));
        assert_eq!(keys.class(), DocumentClass::Series);
    }

    #[test]
    fn glue2_snapshot_kinds_classify_as_snapshot() {
        let partition = Document::new(json!({"partition": {"@name": "p", "@site": "s"}}));
        let queue = Document::new(json!({"queue": {"@name": "q", "@site": "s"}}));
        assert_eq!(extract_keys(&partition, "glue2").class(), DocumentClass::Snapshot);
        assert_eq!(extract_keys(&queue, "glue2").class(), DocumentClass::Snapshot);
    }

    #[test]
    fn missing_fields_stay_storable() {
        let doc = Document::new(json!({"host": {"@name": "n1"}}));
        let keys = extract_keys(&doc, "ganglia");
        assert_eq!(keys.site, None);
        assert_eq!(keys.resource.as_deref(), Some("n1"));
        assert!(!keys.source.is_empty());
        assert!(!keys.kind.is_empty());
    }

    #[test]
    fn unknown_source_is_total() {
        let doc = Document::new(json!({"anything": 1}));
        let keys = extract_keys(&doc, "custom");
        assert_eq!(keys.source, "custom");
        assert_eq!(keys.kind, "document");
        assert_eq!(keys.class(), DocumentClass::Series);
    }

    #[test]
    fn numeric_event_times_scale_to_micros() {
        let doc = Document::new(json!({"link": {"@id": "l1", "ts": 1_367_402_400.5}}));
        let keys = extract_keys(&doc, "snapp");
        assert_eq!(keys.event_time_micros, Some(1_367_402_400_500_000));
    }
}
