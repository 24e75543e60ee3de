//! Synthetic monitoring sources standing behind the ETP adapters.
//!
//! Each source imitates the record shapes of its real counterpart: bundled
//! Ganglia node reports with 37 metrics, Inca pass/fail test reports,
//! perfSONAR bandwidth pairs, SNAPP per-link counters, GLUE2 partition and
//! queue documents, and NetLogger event lines. Records are deterministic
//! functions of the seeded source state, so repeated extraction without an
//! intervening update yields byte-identical snapshots.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde_json::json;
use thiserror::Error;

use crate::document::Document;
use crate::timeutil;
use crate::xform::snapshot::{RawRecord, SourceSnapshot};
use crate::xform::xml::XmlElement;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("extraction failed: {0}")]
pub struct ExtractError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Ganglia,
    Inca,
    Perfsonar,
    Snapp,
    Netlogger,
    Glue2,
}

impl SourceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::Ganglia => "ganglia",
            SourceKind::Inca => "inca",
            SourceKind::Perfsonar => "perfsonar",
            SourceKind::Snapp => "snapp",
            SourceKind::Netlogger => "netlogger",
            SourceKind::Glue2 => "glue2",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "ganglia" => Some(SourceKind::Ganglia),
            "inca" => Some(SourceKind::Inca),
            "perfsonar" => Some(SourceKind::Perfsonar),
            "snapp" => Some(SourceKind::Snapp),
            "netlogger" => Some(SourceKind::Netlogger),
            "glue2" => Some(SourceKind::Glue2),
            _ => None,
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Anything an ETP adapter can pull a snapshot from.
pub trait Extractor: Send {
    fn extract(&mut self) -> Result<SourceSnapshot, ExtractError>;
}

/// The 37 node metrics a stock Ganglia gmond reports.
pub const GANGLIA_METRICS: [&str; 37] = [
    "load_one",
    "load_five",
    "load_fifteen",
    "cpu_user",
    "cpu_system",
    "cpu_idle",
    "cpu_nice",
    "cpu_wio",
    "cpu_aidle",
    "cpu_speed",
    "cpu_num",
    "mem_total",
    "mem_free",
    "mem_cached",
    "mem_buffers",
    "mem_shared",
    "swap_total",
    "swap_free",
    "disk_total",
    "disk_free",
    "part_max_used",
    "bytes_in",
    "bytes_out",
    "pkts_in",
    "pkts_out",
    "proc_run",
    "proc_total",
    "boottime",
    "machine_type",
    "os_name",
    "os_release",
    "gexec",
    "heartbeat",
    "location",
    "mtu",
    "sys_clock",
    "tmax",
];

struct EntityState {
    id: String,
    revision: u64,
    values: Vec<f64>,
}

/// A seeded in-memory source. `advance(n)` updates the next `n` entities in
/// rotation; `extract()` returns a snapshot of the current state.
pub struct SyntheticSource {
    kind: SourceKind,
    site: String,
    rng: Pcg64,
    entities: Vec<EntityState>,
    cursor: usize,
    fail_next: bool,
    netlogger_seq: u64,
}

impl SyntheticSource {
    pub fn new(kind: SourceKind, site: impl Into<String>, entity_count: usize, seed: u64) -> Self {
        let mut rng = Pcg64::seed_from_u64(seed);
        let site = site.into();
        let mut entities = Vec::new();
        for index in 0..entity_count {
            let ids: Vec<String> = match kind {
                SourceKind::Ganglia => vec![format!("node{index:04}")],
                SourceKind::Inca => vec![format!("svc{:03}.test{:03}", index / 4, index % 4)],
                SourceKind::Perfsonar => {
                    let (a, b) = pair_for(index);
                    vec![format!("site{a:02}.site{b:02}")]
                }
                SourceKind::Snapp => vec![format!("link{index:02}")],
                SourceKind::Glue2 => vec![
                    format!("part{index:02}.partition"),
                    format!("part{index:02}.queue"),
                ],
                SourceKind::Netlogger => vec![],
            };
            for id in ids {
                let values = (0..4).map(|_| rng.gen::<f64>()).collect();
                entities.push(EntityState {
                    id,
                    revision: 0,
                    values,
                });
            }
        }
        SyntheticSource {
            kind,
            site,
            rng,
            entities,
            cursor: 0,
            fail_next: false,
            netlogger_seq: 0,
        }
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Updates `count` entities in rotation (new values, bumped revision).
    /// For NetLogger this appends `count` fresh event lines instead.
    pub fn advance(&mut self, count: usize) {
        if self.kind == SourceKind::Netlogger {
            for _ in 0..count {
                let seq = self.netlogger_seq;
                self.netlogger_seq += 1;
                let values = (0..4).map(|_| self.rng.gen::<f64>()).collect();
                self.entities.push(EntityState {
                    id: format!("exp01.worker.task#{seq}"),
                    revision: seq,
                    values,
                });
            }
            return;
        }
        if self.entities.is_empty() {
            return;
        }
        for _ in 0..count {
            let index = self.cursor % self.entities.len();
            self.cursor += 1;
            let entity = &mut self.entities[index];
            entity.revision += 1;
            for value in &mut entity.values {
                *value = self.rng.gen();
            }
        }
    }

    /// Makes the next `extract` fail, emulating an unreachable tool.
    pub fn fail_next_extract(&mut self) {
        self.fail_next = true;
    }

    /// Extension of a raw dump of this source: `.xml` for the XML-speaking
    /// tools, `.log` for NetLogger, `.json` otherwise.
    pub fn dump_extension(&self) -> &'static str {
        match self.kind {
            SourceKind::Ganglia | SourceKind::Inca | SourceKind::Perfsonar => "xml",
            SourceKind::Netlogger => "log",
            SourceKind::Snapp | SourceKind::Glue2 => "json",
        }
    }

    /// Writes the current records to a file for inspection, in the source's
    /// native format: an XML document with a `<dump>` root, NetLogger lines,
    /// or JSON lines. Returns the path written.
    pub fn dump_to_dir<P: AsRef<std::path::Path>>(
        &mut self,
        dir: P,
    ) -> Result<std::path::PathBuf, ExtractError> {
        let snapshot = self.extract()?;
        let path = dir
            .as_ref()
            .join(format!("{}-{}.{}", self.kind, self.site, self.dump_extension()));
        let mut out = String::new();
        match self.kind {
            SourceKind::Ganglia | SourceKind::Inca | SourceKind::Perfsonar => {
                let mut root = XmlElement::new("dump");
                for (_, entry) in snapshot.iter() {
                    if let RawRecord::Xml(tree) = &entry.record {
                        root = root.child(tree.clone());
                    }
                }
                out.push_str(&root.to_xml_string());
                out.push('\n');
            }
            SourceKind::Netlogger => {
                for (_, entry) in snapshot.iter() {
                    if let RawRecord::NetLoggerLine(line) = &entry.record {
                        out.push_str(line);
                        out.push('\n');
                    }
                }
            }
            SourceKind::Snapp | SourceKind::Glue2 => {
                for (_, entry) in snapshot.iter() {
                    if let RawRecord::Json(doc) = &entry.record {
                        out.push_str(&doc.canonical_string());
                        out.push('\n');
                    }
                }
            }
        }
        std::fs::write(&path, out).map_err(|e| ExtractError(format!("dump failed: {e}")))?;
        Ok(path)
    }

    fn record_for(&self, entity: &EntityState) -> RawRecord {
        // timestamps are derived from the revision so records only change
        // when the entity actually updates
        let stamp = 1_367_402_400 + entity.revision * 15;
        match self.kind {
            SourceKind::Ganglia => {
                let node = entity.id.as_str();
                let mut host = XmlElement::new("host")
                    .attr("name", node)
                    .attr("site", &self.site)
                    .attr("reported", stamp.to_string());
                for (i, metric) in GANGLIA_METRICS.iter().enumerate() {
                    let val = entity.values[i % entity.values.len()] * 100.0;
                    host = host.child(
                        XmlElement::new("metric")
                            .attr("name", *metric)
                            .attr("val", format!("{val:.3}"))
                            .attr("tn", (entity.revision % 15).to_string()),
                    );
                }
                RawRecord::Xml(host)
            }
            SourceKind::Inca => {
                let (service, test) = entity.id.split_once('.').unwrap_or((entity.id.as_str(), "t"));
                let passed = entity.values[0] > 0.1;
                RawRecord::Xml(
                    XmlElement::new("report")
                        .attr("site", &self.site)
                        .attr("service", service)
                        .attr("test", test)
                        .attr("completed", timeutil::format_rfc3339_micros(stamp * 1_000_000))
                        .attr("result", if passed { "pass" } else { "fail" })
                        .child(
                            XmlElement::new("body").text(format!(
                                "exit={} wall={:.2}s",
                                u8::from(!passed),
                                entity.values[1] * 30.0
                            )),
                        ),
                )
            }
            SourceKind::Perfsonar => {
                let (src, dst) = entity.id.split_once('.').unwrap_or((entity.id.as_str(), "x"));
                RawRecord::Xml(
                    XmlElement::new("measurement")
                        .attr("src", src)
                        .attr("dst", dst)
                        .attr("ts", stamp.to_string())
                        .child(
                            XmlElement::new("bandwidth")
                                .attr("units", "Mbps")
                                .text(format!("{:.1}", 800.0 + entity.values[0] * 200.0)),
                        ),
                )
            }
            SourceKind::Snapp => RawRecord::Json(Document::new(json!({
                "link": {
                    "@id": entity.id,
                    "octetsIn": (entity.values[0] * 1e9) as u64 + entity.revision,
                    "octetsOut": (entity.values[1] * 1e9) as u64 + entity.revision,
                    "ts": stamp,
                }
            }))),
            SourceKind::Glue2 => {
                let (partition, doc_kind) = entity
                    .id
                    .split_once('.')
                    .unwrap_or((entity.id.as_str(), "partition"));
                if doc_kind == "queue" {
                    RawRecord::Json(Document::new(json!({
                        "queue": {
                            "@name": format!("{partition}-batch"),
                            "@site": self.site,
                            "waiting": (entity.values[0] * 40.0) as u64,
                            "running": (entity.values[1] * 400.0) as u64,
                            "ts": stamp,
                        }
                    })))
                } else {
                    RawRecord::Json(Document::new(json!({
                        "partition": {
                            "@name": partition,
                            "@site": self.site,
                            "totalNodes": 64,
                            "freeNodes": (entity.values[0] * 64.0) as u64,
                            "state": "production",
                            "ts": stamp,
                        }
                    })))
                }
            }
            SourceKind::Netlogger => {
                let ts = timeutil::format_rfc3339_micros((1_367_402_400 + entity.revision) * 1_000_000);
                let core = entity.id.split('#').next().unwrap_or("exp");
                let mut parts = core.split('.');
                let experiment = parts.next().unwrap_or("exp01");
                let component = parts.next().unwrap_or("worker");
                let event = parts.next().unwrap_or("task");
                RawRecord::NetLoggerLine(format!(
                    "ts={ts} event={event}.{} level=INFO experiment={experiment} component={component} dur={:.3}",
                    if entity.values[0] > 0.5 { "start" } else { "end" },
                    entity.values[1],
                ))
            }
        }
    }
}

impl Extractor for SyntheticSource {
    fn extract(&mut self) -> Result<SourceSnapshot, ExtractError> {
        if self.fail_next {
            self.fail_next = false;
            return Err(ExtractError(format!("{} endpoint unreachable", self.kind)));
        }
        let mut snapshot = SourceSnapshot::new();
        for entity in &self.entities {
            snapshot.insert(entity.id.clone(), self.record_for(entity));
        }
        Ok(snapshot)
    }
}

/// Enumerates distinct unordered site pairs: 0↔1, 0↔2, 1↔2, 0↔3, ...
fn pair_for(index: usize) -> (usize, usize) {
    let mut count = 0;
    for b in 1.. {
        for a in 0..b {
            if count == index {
                return (a, b);
            }
            count += 1;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_is_stable_until_advanced() {
        let mut source = SyntheticSource::new(SourceKind::Ganglia, "site01", 5, 7);
        let first = source.extract().unwrap();
        let second = source.extract().unwrap();
        assert_eq!(first, second);
        source.advance(2);
        let third = source.extract().unwrap();
        assert_ne!(first, third);
    }

    #[test]
    fn ganglia_records_have_37_metrics() {
        let mut source = SyntheticSource::new(SourceKind::Ganglia, "site01", 1, 7);
        let snap = source.extract().unwrap();
        let (_, entry) = snap.iter().next().unwrap();
        match &entry.record {
            RawRecord::Xml(host) => assert_eq!(host.children.len(), 37),
            other => panic!("expected XML, got {other:?}"),
        }
    }

    #[test]
    fn glue2_source_yields_partition_and_queue_docs() {
        let mut source = SyntheticSource::new(SourceKind::Glue2, "site01", 3, 7);
        let snap = source.extract().unwrap();
        assert_eq!(snap.len(), 6);
        assert!(snap.get("part00.partition").is_some());
        assert!(snap.get("part00.queue").is_some());
    }

    #[test]
    fn netlogger_appends_lines() {
        let mut source = SyntheticSource::new(SourceKind::Netlogger, "-", 0, 7);
        assert_eq!(source.extract().unwrap().len(), 0);
        source.advance(3);
        assert_eq!(source.extract().unwrap().len(), 3);
        source.advance(1);
        assert_eq!(source.extract().unwrap().len(), 4);
    }

    #[test]
    fn dumps_use_native_formats() {
        let dir = std::env::temp_dir().join(format!("fedmon_dump_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let mut ganglia = SyntheticSource::new(SourceKind::Ganglia, "site01", 3, 7);
        let path = ganglia.dump_to_dir(&dir).unwrap();
        assert!(path.to_string_lossy().ends_with("ganglia-site01.xml"));
        let text = std::fs::read_to_string(&path).unwrap();
        let tree = crate::xform::xml::parse_xml(&text).unwrap();
        assert_eq!(tree.name, "dump");
        assert_eq!(tree.children.len(), 3);

        let mut snapp = SyntheticSource::new(SourceKind::Snapp, "site01", 2, 7);
        let path = snapp.dump_to_dir(&dir).unwrap();
        assert!(path.to_string_lossy().ends_with("snapp-site01.json"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            crate::document::Document::parse(line).unwrap();
        }

        let mut netlogger = SyntheticSource::new(SourceKind::Netlogger, "site01", 0, 7);
        netlogger.advance(4);
        let path = netlogger.dump_to_dir(&dir).unwrap();
        assert!(path.to_string_lossy().ends_with("netlogger-site01.log"));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn failure_injection_is_one_shot() {
        let mut source = SyntheticSource::new(SourceKind::Snapp, "-", 2, 7);
        source.fail_next_extract();
        assert!(source.extract().is_err());
        assert!(source.extract().is_ok());
    }

    #[test]
    fn site_pairs_are_distinct() {
        let pairs: Vec<(usize, usize)> = (0..10).map(pair_for).collect();
        let unique: std::collections::BTreeSet<_> = pairs.iter().collect();
        assert_eq!(unique.len(), 10);
        assert_eq!(pairs[0], (0, 1));
        assert_eq!(pairs[1], (0, 2));
    }
}
