//! Hybrid searchable cache: extracted key columns beside the full JSON
//! document, with latest-snapshot and append-series semantics, secondary
//! hash indexes, JSON-path predicates, retention pruning, and a JSON-lines
//! persistence snapshot.

pub mod jsonpath;
pub mod keys;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jsonpath::{JsonPathError, JsonPathPredicate, PathStep};
pub use keys::{classify_kind, extract_keys, DocumentClass, KeyFields, SNAPSHOT_KINDS};

use crate::document::{Document, DocumentError};
use crate::message::Message;
use crate::timeutil;

/// Default retention for high-volume series records. Snapshot kinds are
/// never pruned.
pub const DEFAULT_RETENTION: Duration = Duration::from_secs(3_600);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    BadJsonPath(#[from] JsonPathError),
    #[error("filter needs at least one predicate or a limit")]
    EmptyFilter,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad persisted record at line {line}: {message}")]
    BadPersistedRecord { line: usize, message: String },
    #[error(transparent)]
    BadDocument(#[from] DocumentError),
}

/// One stored row: monotone id, key columns, document, insertion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub id: u64,
    #[serde(flatten)]
    pub keys: KeyFields,
    pub inserted_at_micros: u64,
    pub document: Document,
}

/// Equality predicates on key columns, an optional event-time range,
/// optional JSON-path predicates, latest-only grouping, and a result limit.
#[derive(Debug, Clone, Default)]
pub struct QueryFilter {
    pub source: Option<String>,
    pub site: Option<String>,
    pub resource: Option<String>,
    pub service: Option<String>,
    pub kind: Option<String>,
    pub since_micros: Option<u64>,
    pub until_micros: Option<u64>,
    pub json_paths: Vec<JsonPathPredicate>,
    pub latest_only: bool,
    pub limit: Option<usize>,
}

impl QueryFilter {
    pub fn new() -> Self {
        QueryFilter::default()
    }

    pub fn source(mut self, v: impl Into<String>) -> Self {
        self.source = Some(v.into());
        self
    }

    pub fn site(mut self, v: impl Into<String>) -> Self {
        self.site = Some(v.into());
        self
    }

    pub fn resource(mut self, v: impl Into<String>) -> Self {
        self.resource = Some(v.into());
        self
    }

    pub fn service(mut self, v: impl Into<String>) -> Self {
        self.service = Some(v.into());
        self
    }

    pub fn kind(mut self, v: impl Into<String>) -> Self {
        self.kind = Some(v.into());
        self
    }

    pub fn json_path(mut self, expr: &str) -> Result<Self, StoreError> {
        self.json_paths.push(JsonPathPredicate::parse(expr)?);
        Ok(self)
    }

    pub fn latest_only(mut self) -> Self {
        self.latest_only = true;
        self
    }

    pub fn limit(mut self, n: usize) -> Self {
        self.limit = Some(n);
        self
    }

    pub fn time_range(mut self, since: Option<u64>, until: Option<u64>) -> Self {
        self.since_micros = since;
        self.until_micros = until;
        self
    }

    fn has_any_predicate(&self) -> bool {
        self.source.is_some()
            || self.site.is_some()
            || self.resource.is_some()
            || self.service.is_some()
            || self.kind.is_some()
            || self.since_micros.is_some()
            || self.until_micros.is_some()
            || !self.json_paths.is_empty()
            || self.latest_only
    }

    fn record_matches(&self, record: &StoredRecord) -> bool {
        let eq = |want: &Option<String>, have: &Option<String>| match want {
            None => true,
            Some(w) => have.as_deref() == Some(w.as_str()),
        };
        if let Some(source) = &self.source {
            if record.keys.source != *source {
                return false;
            }
        }
        if let Some(kind) = &self.kind {
            if record.keys.kind != *kind {
                return false;
            }
        }
        if !eq(&self.site, &record.keys.site)
            || !eq(&self.resource, &record.keys.resource)
            || !eq(&self.service, &record.keys.service)
        {
            return false;
        }
        let event_time = record.keys.event_time_micros.unwrap_or(record.inserted_at_micros);
        if let Some(since) = self.since_micros {
            if event_time < since {
                return false;
            }
        }
        if let Some(until) = self.until_micros {
            if event_time > until {
                return false;
            }
        }
        self.json_paths
            .iter()
            .all(|p| p.matches(record.document.value()))
    }
}

type EntityKey = (String, Option<String>, Option<String>, Option<String>, String);

type Postings = HashMap<String, HashSet<u64>>;

#[derive(Default)]
struct StoreInner {
    records: BTreeMap<u64, StoredRecord>,
    next_id: u64,
    by_source: Postings,
    by_site: Postings,
    by_resource: Postings,
    by_service: Postings,
    by_kind: Postings,
    snapshot_latest: HashMap<EntityKey, u64>,
}

fn posting_remove(postings: &mut Postings, key: &str, id: u64) {
    if let Some(ids) = postings.get_mut(key) {
        ids.remove(&id);
        if ids.is_empty() {
            postings.remove(key);
        }
    }
}

impl StoreInner {
    fn index(&mut self, record: &StoredRecord) {
        let id = record.id;
        self.by_source
            .entry(record.keys.source.clone())
            .or_default()
            .insert(id);
        if let Some(site) = &record.keys.site {
            self.by_site.entry(site.clone()).or_default().insert(id);
        }
        if let Some(resource) = &record.keys.resource {
            self.by_resource.entry(resource.clone()).or_default().insert(id);
        }
        if let Some(service) = &record.keys.service {
            self.by_service.entry(service.clone()).or_default().insert(id);
        }
        self.by_kind
            .entry(record.keys.kind.clone())
            .or_default()
            .insert(id);
    }

    /// Strips one record from exactly the posting sets it appears in.
    fn unindex_record(&mut self, record: &StoredRecord) {
        let id = record.id;
        posting_remove(&mut self.by_source, &record.keys.source, id);
        if let Some(site) = &record.keys.site {
            posting_remove(&mut self.by_site, site, id);
        }
        if let Some(resource) = &record.keys.resource {
            posting_remove(&mut self.by_resource, resource, id);
        }
        if let Some(service) = &record.keys.service {
            posting_remove(&mut self.by_service, service, id);
        }
        posting_remove(&mut self.by_kind, &record.keys.kind, id);
    }

    fn insert(&mut self, keys: KeyFields, document: Document, now_micros: u64) -> u64 {
        self.next_id += 1;
        let record = StoredRecord {
            id: self.next_id,
            keys,
            inserted_at_micros: now_micros,
            document,
        };
        self.index(&record);
        self.records.insert(record.id, record);
        self.next_id
    }

    fn remove_one(&mut self, id: u64) {
        if let Some(record) = self.records.remove(&id) {
            self.unindex_record(&record);
        }
    }

    /// Smallest applicable posting set, else a full scan, descending id.
    fn candidate_ids(&self, filter: &QueryFilter) -> Vec<u64> {
        let mut best: Option<&HashSet<u64>> = None;
        let lookups: [(&Option<String>, &Postings); 5] = [
            (&filter.source, &self.by_source),
            (&filter.site, &self.by_site),
            (&filter.resource, &self.by_resource),
            (&filter.service, &self.by_service),
            (&filter.kind, &self.by_kind),
        ];
        for (wanted, index) in lookups {
            if let Some(value) = wanted {
                match index.get(value) {
                    Some(ids) => {
                        if best.is_none_or(|b| ids.len() < b.len()) {
                            best = Some(ids);
                        }
                    }
                    None => return Vec::new(), // indexed value absent anywhere
                }
            }
        }
        match best {
            Some(ids) => {
                let mut ids: Vec<u64> = ids.iter().copied().collect();
                ids.sort_unstable_by(|a, b| b.cmp(a));
                ids
            }
            None => self.records.keys().rev().copied().collect(),
        }
    }
}

/// The store. Many concurrent writers and readers; queries see a consistent
/// point-in-time view.
#[derive(Default)]
pub struct Store {
    inner: Mutex<StoreInner>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    /// Latest-only write: at most one record per (source, site, resource,
    /// service, kind); the older record is replaced atomically.
    pub fn upsert_latest(&self, document: Document, keys: KeyFields) -> u64 {
        let now = timeutil::now_micros();
        let mut inner = self.inner.lock().unwrap();
        let entity = keys.entity_key();
        if let Some(&old_id) = inner.snapshot_latest.get(&entity) {
            inner.remove_one(old_id);
        }
        let id = inner.insert(keys, document, now);
        inner.snapshot_latest.insert(entity, id);
        id
    }

    /// Append-only write for series kinds.
    pub fn append_series(&self, document: Document, keys: KeyFields) -> u64 {
        let now = timeutil::now_micros();
        let mut inner = self.inner.lock().unwrap();
        inner.insert(keys, document, now)
    }

    /// Routes by document class: snapshot kinds upsert, series kinds append.
    pub fn ingest(&self, document: Document, keys: KeyFields) -> u64 {
        match keys.class() {
            DocumentClass::Snapshot => self.upsert_latest(document, keys),
            DocumentClass::Series => self.append_series(document, keys),
        }
    }

    /// Ingests a routed message: the source kind comes from the routing key,
    /// key columns from the document (with grammar-position fallbacks), and
    /// the event time defaults to the publish timestamp.
    pub fn ingest_message(&self, message: &Message) -> Result<u64, StoreError> {
        let document = message.document()?;
        let words = message.routing_key().words();
        let source = &words[0];
        let mut keys = extract_keys(&document, source);
        match source.as_str() {
            "ganglia" | "inca" | "glue2" => {
                if keys.site.is_none() && words.len() >= 2 {
                    keys.site = Some(words[1].clone());
                }
                if keys.resource.is_none() && words.len() >= 3 {
                    keys.resource = Some(words[2].clone());
                }
            }
            "snapp" if keys.resource.is_none() && words.len() >= 2 => {
                keys.resource = Some(words[1].clone());
            }
            "perfsonar" if keys.resource.is_none() && words.len() >= 3 => {
                keys.resource = Some(format!("{}-{}", words[1], words[2]));
            }
            _ => {}
        }
        if keys.event_time_micros.is_none() {
            keys.event_time_micros = Some(message.published_at_micros());
        }
        Ok(self.ingest(document, keys))
    }

    /// All and only records satisfying every predicate, newest first,
    /// truncated at the limit.
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<StoredRecord>, StoreError> {
        if !filter.has_any_predicate() && filter.limit.is_none() {
            return Err(StoreError::EmptyFilter);
        }
        let inner = self.inner.lock().unwrap();
        let mut out = Vec::new();
        let mut seen_entities: HashSet<EntityKey> = HashSet::new();
        for id in inner.candidate_ids(filter) {
            let record = match inner.records.get(&id) {
                Some(r) => r,
                None => continue,
            };
            if !filter.record_matches(record) {
                continue;
            }
            if filter.latest_only && !seen_entities.insert(record.keys.entity_key()) {
                continue;
            }
            out.push(record.clone());
            if let Some(limit) = filter.limit {
                if out.len() >= limit {
                    break;
                }
            }
        }
        Ok(out)
    }

    pub fn record_count(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    /// Removes series records older than `now - retention` (by insertion
    /// time). Snapshot records are never pruned.
    pub fn prune(&self, retention: Duration) -> usize {
        let cutoff = timeutil::now_micros().saturating_sub(retention.as_micros() as u64);
        let mut inner = self.inner.lock().unwrap();
        let doomed: Vec<u64> = inner
            .records
            .values()
            .filter(|r| r.keys.class() == DocumentClass::Series && r.inserted_at_micros < cutoff)
            .map(|r| r.id)
            .collect();
        for id in &doomed {
            inner.remove_one(*id);
        }
        doomed.len()
    }

    /// Writes the record set as JSON lines, one record per line.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<usize, StoreError> {
        let inner = self.inner.lock().unwrap();
        let file = std::fs::File::create(path)?;
        let mut writer = BufWriter::new(file);
        for record in inner.records.values() {
            serde_json::to_writer(&mut writer, record)
                .map_err(std::io::Error::other)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(inner.records.len())
    }

    /// Loads a JSON-lines snapshot. The latest-only law is re-established:
    /// a snapshot-kind record replaces any earlier record of its entity.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let store = Store::new();
        {
            let mut inner = store.inner.lock().unwrap();
            for (line_no, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: StoredRecord =
                    serde_json::from_str(&line).map_err(|e| StoreError::BadPersistedRecord {
                        line: line_no + 1,
                        message: e.to_string(),
                    })?;
                if record.keys.class() == DocumentClass::Snapshot {
                    let entity = record.keys.entity_key();
                    if let Some(&old_id) = inner.snapshot_latest.get(&entity) {
                        inner.remove_one(old_id);
                    }
                    inner.snapshot_latest.insert(entity, record.id);
                }
                inner.next_id = inner.next_id.max(record.id);
                inner.index(&record);
                inner.records.insert(record.id, record);
            }
        }
        Ok(store)
    }

    /// Clones every record, oldest first. The full-scan oracle in tests and
    /// the CLI dump path both use this.
    pub fn all_records(&self) -> Vec<StoredRecord> {
        self.inner.lock().unwrap().records.values().cloned().collect()
    }
}
