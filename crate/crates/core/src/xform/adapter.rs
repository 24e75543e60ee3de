//! Extract-Transform-Publish adapters.
//!
//! One adapter per monitoring tool: pull a snapshot in a tool-specific way,
//! diff it against the last one seen, transform the changed records into the
//! common JSON form, and publish one tagged message per changed entity.

use std::time::Duration;

use thiserror::Error;

use crate::broker::{PublishSink, PublishSinkError};
use crate::document::Document;
use crate::message::Message;
use crate::routing::{KeyParseError, RoutingKey};
use crate::xform::netlogger::{netlogger_to_json, NetLoggerError};
use crate::xform::snapshot::{detect_updates, RawRecord, SourceSnapshot};
use crate::xform::sources::{ExtractError, Extractor, SourceKind, SyntheticSource};
use crate::xform::xml::xml_to_json;

#[derive(Debug, Error)]
pub enum EtpError {
    #[error("poll period must be positive")]
    ZeroPollPeriod,
    #[error("unknown source kind {0:?}")]
    UnknownSource(String),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    NetLogger(#[from] NetLoggerError),
    #[error(transparent)]
    RoutingKey(#[from] KeyParseError),
    #[error(transparent)]
    Publish(#[from] PublishSinkError),
}

/// Builds the routing key for a changed entity under the shared grammar:
/// `ganglia.<site>.<node>.metrics`, `inca.<site>.<service>.<test>`,
/// `snapp.<linkid>.traffic`, `perfsonar.<src>.<dst>.bandwidth`,
/// `glue2.<site>.<partition>.<partition|queue>`,
/// `netlogger.<experiment>.<component>.<event>`.
pub fn routing_key_for(kind: SourceKind, site: &str, entity_id: &str) -> Result<RoutingKey, KeyParseError> {
    // a `#suffix` on the entity id (sequence numbers) is not part of the key
    let core = entity_id.split('#').next().unwrap_or(entity_id);
    let mut words: Vec<&str> = vec![kind.as_str()];
    match kind {
        SourceKind::Ganglia => {
            words.push(site);
            words.push(core);
            words.push("metrics");
        }
        SourceKind::Inca => {
            words.push(site);
            words.extend(core.split('.'));
        }
        SourceKind::Snapp => {
            words.push(core);
            words.push("traffic");
        }
        SourceKind::Perfsonar => {
            words.extend(core.split('.'));
            words.push("bandwidth");
        }
        SourceKind::Glue2 => {
            words.push(site);
            words.extend(core.split('.'));
        }
        SourceKind::Netlogger => {
            words.extend(core.split('.'));
        }
    }
    RoutingKey::from_words(words)
}

/// Transforms a raw record into the common JSON representation.
pub fn transform_record(record: &RawRecord) -> Result<Document, EtpError> {
    match record {
        RawRecord::Xml(tree) => Ok(xml_to_json(tree)),
        RawRecord::Json(doc) => Ok(doc.clone()),
        RawRecord::NetLoggerLine(line) => Ok(netlogger_to_json(line)?),
    }
}

/// Adapter state: source identity, poll period, and the last snapshot seen.
pub struct EtpAdapter {
    kind: SourceKind,
    site: String,
    poll_period: Duration,
    last_seen: SourceSnapshot,
    pub cycles_run: u64,
    pub cycles_failed: u64,
    pub published_total: u64,
}

impl EtpAdapter {
    pub fn new(kind: SourceKind, site: impl Into<String>, poll_period: Duration) -> Result<Self, EtpError> {
        if poll_period.is_zero() {
            return Err(EtpError::ZeroPollPeriod);
        }
        Ok(EtpAdapter {
            kind,
            site: site.into(),
            poll_period,
            last_seen: SourceSnapshot::new(),
            cycles_run: 0,
            cycles_failed: 0,
            published_total: 0,
        })
    }

    /// Builds an adapter plus its synthetic source from a profile's adapter
    /// configuration block.
    pub fn from_config(
        config: &crate::workload::profile::AdapterConfig,
        seed: u64,
    ) -> Result<(Self, SyntheticSource), EtpError> {
        let kind = SourceKind::parse(&config.source)
            .ok_or_else(|| EtpError::UnknownSource(config.source.clone()))?;
        let adapter = EtpAdapter::new(
            kind,
            config.site.clone(),
            Duration::from_secs_f64(config.poll_period_secs),
        )?;
        let source = SyntheticSource::new(kind, config.site.clone(), config.entities as usize, seed);
        Ok((adapter, source))
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn site(&self) -> &str {
        &self.site
    }

    pub fn poll_period(&self) -> Duration {
        self.poll_period
    }

    /// Runs one extract-transform-publish cycle and returns how many
    /// messages were published. On extraction failure the cycle is skipped,
    /// the error counted, and the last-seen snapshot left unchanged.
    pub fn run_cycle(
        &mut self,
        extractor: &mut dyn Extractor,
        sink: &dyn PublishSink,
    ) -> Result<usize, EtpError> {
        self.cycles_run += 1;
        let current = match extractor.extract() {
            Ok(snapshot) => snapshot,
            Err(err) => {
                self.cycles_failed += 1;
                return Err(EtpError::Extract(err));
            }
        };
        let diff = detect_updates(&self.last_seen, &current);
        let mut published = 0;
        for entity_id in &diff.changed {
            let entry = current.get(entity_id).expect("changed id exists in current");
            let document = transform_record(&entry.record)?;
            let key = routing_key_for(self.kind, &self.site, entity_id)?;
            sink.publish(Message::new(key, &document))?;
            published += 1;
        }
        self.last_seen = current;
        self.published_total += published as u64;
        Ok(published as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::CollectSink;
    use crate::xform::sources::SyntheticSource;

    #[test]
    fn ganglia_cycle_publishes_only_updates() {
        let mut source = SyntheticSource::new(SourceKind::Ganglia, "site01", 10, 7);
        let mut adapter =
            EtpAdapter::new(SourceKind::Ganglia, "site01", Duration::from_secs(15)).unwrap();
        let sink = CollectSink::new();

        // first cycle publishes every node once
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 10);
        sink.drain();

        // static source: nothing to publish
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 0);

        // 3 of 10 nodes updated -> exactly 3 messages with ganglia keys
        source.advance(3);
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 3);
        let messages = sink.drain();
        assert_eq!(messages.len(), 3);
        for message in &messages {
            let words = message.routing_key().words();
            assert_eq!(words.len(), 4);
            assert_eq!(words[0], "ganglia");
            assert_eq!(words[1], "site01");
            assert!(words[2].starts_with("node"));
            assert_eq!(words[3], "metrics");
        }
    }

    #[test]
    fn inca_new_report_publishes_one() {
        let mut source = SyntheticSource::new(SourceKind::Inca, "site01", 8, 7);
        let mut adapter =
            EtpAdapter::new(SourceKind::Inca, "site01", Duration::from_secs(900)).unwrap();
        let sink = CollectSink::new();
        adapter.run_cycle(&mut source, &sink).unwrap();
        sink.drain();

        source.advance(1);
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 1);
        let messages = sink.drain();
        let words = messages[0].routing_key().words();
        assert_eq!(words[0], "inca");
        assert_eq!(words[1], "site01");
        assert!(words[2].starts_with("svc"));
        assert!(words[3].starts_with("test"));
    }

    #[test]
    fn extraction_failure_skips_cycle_and_keeps_snapshot() {
        let mut source = SyntheticSource::new(SourceKind::Snapp, "-", 4, 7);
        let mut adapter =
            EtpAdapter::new(SourceKind::Snapp, "-", Duration::from_secs(10)).unwrap();
        let sink = CollectSink::new();
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 4);
        sink.drain();

        source.fail_next_extract();
        assert!(adapter.run_cycle(&mut source, &sink).is_err());
        assert_eq!(adapter.cycles_failed, 1);
        assert!(sink.is_empty());

        // snapshot unchanged by the failure: a clean cycle publishes nothing
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 0);
    }

    #[test]
    fn from_config_wires_adapter_and_source() {
        let config = crate::workload::profile::AdapterConfig {
            source: "ganglia".into(),
            site: "site03".into(),
            entities: 5,
            poll_period_secs: 15.0,
        };
        let (mut adapter, mut source) = EtpAdapter::from_config(&config, 7).unwrap();
        assert_eq!(adapter.kind(), SourceKind::Ganglia);
        assert_eq!(adapter.site(), "site03");
        assert_eq!(adapter.poll_period(), Duration::from_secs(15));
        let sink = CollectSink::new();
        assert_eq!(adapter.run_cycle(&mut source, &sink).unwrap(), 5);

        let bad = crate::workload::profile::AdapterConfig {
            source: "nagios".into(),
            site: "s".into(),
            entities: 1,
            poll_period_secs: 1.0,
        };
        assert!(matches!(
            EtpAdapter::from_config(&bad, 7),
            Err(EtpError::UnknownSource(_))
        ));
    }

    #[test]
    fn zero_poll_period_rejected() {
        assert!(matches!(
            EtpAdapter::new(SourceKind::Ganglia, "s", Duration::ZERO),
            Err(EtpError::ZeroPollPeriod)
        ));
    }

    #[test]
    fn routing_keys_follow_grammar() {
        let cases = [
            (SourceKind::Ganglia, "site01", "node0042", "ganglia.site01.node0042.metrics"),
            (SourceKind::Inca, "site01", "svc003.test001", "inca.site01.svc003.test001"),
            (SourceKind::Snapp, "-", "link03", "snapp.link03.traffic"),
            (SourceKind::Perfsonar, "-", "site00.site01", "perfsonar.site00.site01.bandwidth"),
            (SourceKind::Glue2, "site02", "part01.queue", "glue2.site02.part01.queue"),
            (SourceKind::Netlogger, "-", "exp01.worker.task#9", "netlogger.exp01.worker.task"),
        ];
        for (kind, site, entity, expected) in cases {
            assert_eq!(routing_key_for(kind, site, entity).unwrap().to_string(), expected);
        }
    }

    #[test]
    fn glue2_and_netlogger_records_transform() {
        let mut glue2 = SyntheticSource::new(SourceKind::Glue2, "site01", 2, 7);
        let snap = glue2.extract().unwrap();
        for (_, entry) in snap.iter() {
            transform_record(&entry.record).unwrap();
        }
        let mut netlogger = SyntheticSource::new(SourceKind::Netlogger, "-", 0, 7);
        netlogger.advance(2);
        let snap = netlogger.extract().unwrap();
        for (_, entry) in snap.iter() {
            let doc = transform_record(&entry.record).unwrap();
            assert!(doc.get_path(&["ts"]).is_some());
        }
    }
}
