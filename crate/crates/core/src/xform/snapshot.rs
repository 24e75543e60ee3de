//! Source snapshots and change detection.
//!
//! An extraction produces a snapshot mapping entity ids (node, link, test,
//! machine) to versioned raw records. Diffing the previous snapshot against
//! the current one yields the entity ids whose information changed, the
//! basis for publishing only updates.

use std::collections::BTreeMap;

use crate::document::Document;
use crate::hash::fnv1a64;
use crate::xform::xml::XmlElement;

/// A raw record as pulled from a monitoring tool, before transformation.
#[derive(Debug, Clone, PartialEq)]
pub enum RawRecord {
    Xml(XmlElement),
    Json(Document),
    NetLoggerLine(String),
}

impl RawRecord {
    /// Stable byte form used for version hashing.
    pub fn version_bytes(&self) -> Vec<u8> {
        match self {
            RawRecord::Xml(e) => e.to_xml_string().into_bytes(),
            RawRecord::Json(d) => d.canonical_bytes(),
            RawRecord::NetLoggerLine(l) => l.clone().into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub version: u64,
    pub record: RawRecord,
}

/// Map from entity id to versioned raw record. Entity ids are unique by
/// construction of the map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSnapshot {
    entries: BTreeMap<String, SnapshotEntry>,
}

impl SourceSnapshot {
    pub fn new() -> Self {
        SourceSnapshot::default()
    }

    /// Inserts a record, deriving its version token from the canonical
    /// serialization of the raw record.
    pub fn insert(&mut self, entity_id: impl Into<String>, record: RawRecord) {
        let version = fnv1a64(&record.version_bytes());
        self.entries
            .insert(entity_id.into(), SnapshotEntry { version, record });
    }

    pub fn get(&self, entity_id: &str) -> Option<&SnapshotEntry> {
        self.entries.get(entity_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &SnapshotEntry)> {
        self.entries.iter()
    }
}

/// Result of comparing two snapshots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotDiff {
    /// New entities and entities whose version token changed, sorted.
    pub changed: Vec<String>,
    /// Entities present before but gone now, sorted. Reported separately;
    /// removals are not published.
    pub removed: Vec<String>,
}

/// Deterministic diff: ids whose version changed or that are new, with
/// removed ids reported separately.
pub fn detect_updates(previous: &SourceSnapshot, current: &SourceSnapshot) -> SnapshotDiff {
    let mut diff = SnapshotDiff::default();
    for (id, entry) in current.iter() {
        match previous.get(id) {
            Some(old) if old.version == entry.version => {}
            _ => diff.changed.push(id.clone()),
        }
    }
    for (id, _) in previous.iter() {
        if current.get(id).is_none() {
            diff.removed.push(id.clone());
        }
    }
    diff
}
