//! Deterministic traffic generators for the emulation.
//!
//! Periodic sources (node metric bundles, link counters, bandwidth tests,
//! partition and queue snapshots, Inca tests) fire on fixed periods with
//! seed-randomized phases. Job traffic is a Poisson arrival process; every
//! job publishes submit, start, and end updates, with queued and running
//! delays sized so the mean population matches the profile's simultaneous
//! jobs (10% queued, 90% running). The job population is pre-seeded at time
//! zero so start/end rates are in steady state from the first second.
//!
//! Every document is padded (or its job list truncated) to the profile's
//! per-source payload target, so the emulated byte mix matches the
//! characterization. All randomness is derived from the master seed: the
//! same seed and profile yield the same event schedule and documents.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde_json::{json, Value};

use crate::document::Document;
use crate::hash::derive_seed;
use crate::routing::RoutingKey;
use crate::timeutil;
use crate::workload::profile::InfrastructureProfile;

pub const SOURCE_GANGLIA: &str = "ganglia";
pub const SOURCE_SNAPP: &str = "snapp";
pub const SOURCE_PERFSONAR: &str = "perfsonar";
pub const SOURCE_INCA: &str = "inca";
pub const SOURCE_GLUE2_PARTITION: &str = "glue2.partition";
pub const SOURCE_GLUE2_QUEUE: &str = "glue2.queue";
pub const SOURCE_GLUE2_JOB: &str = "glue2.job";

/// All source labels a profile can emit, in report order.
pub const SOURCE_LABELS: [&str; 7] = [
    SOURCE_GANGLIA,
    SOURCE_SNAPP,
    SOURCE_PERFSONAR,
    SOURCE_INCA,
    SOURCE_GLUE2_PARTITION,
    SOURCE_GLUE2_QUEUE,
    SOURCE_GLUE2_JOB,
];

#[derive(Debug, Clone)]
pub struct EventPayload {
    pub source_label: &'static str,
    pub key: RoutingKey,
    pub document: Document,
}

#[derive(Debug, Clone)]
pub struct ScheduledEvent {
    /// Offset from the start of the run, microseconds.
    pub at_micros: u64,
    pub payload: EventPayload,
}

/// Pads the root object with a filler key so the canonical serialization is
/// exactly `target` bytes. Leaves the document alone when it already meets
/// or exceeds the target.
pub fn pad_document_to(document: Document, target: usize) -> Document {
    let natural = document.canonical_len();
    let mut value = document.into_value();
    if let Value::Object(map) = &mut value {
        // adding `"zpad":"…"` costs 10 bytes of structure in a non-empty
        // object (9 in an empty one) plus the filler itself
        let overhead = if map.is_empty() { 9 } else { 10 };
        if natural + overhead <= target {
            let filler = target - natural - overhead;
            map.insert("zpad".to_string(), Value::String("x".repeat(filler)));
        }
    }
    Document::new(value)
}

fn secs(epoch_micros: u64, at_micros: u64) -> u64 {
    (epoch_micros + at_micros) / 1_000_000
}

fn exp_micros(rng: &mut Pcg64, mean_micros: f64) -> u64 {
    let u: f64 = rng.gen();
    (-(1.0 - u).ln() * mean_micros) as u64
}

struct PeriodicGenerator {
    label: &'static str,
    period_micros: u64,
    next_at: u64,
    rng: Pcg64,
    kind: PeriodicKind,
    target_bytes: Option<usize>,
}

enum PeriodicKind {
    GangliaNode { site: String, node: String },
    SnappLink { link: String, octets_in: u64, octets_out: u64 },
    PerfsonarLink { src: String, dst: String },
    IncaTest { site: String, service: String, test: String },
    Glue2Partition { site: String, partition: String },
    Glue2Queue { site: String, partition: String, job_entries: usize },
}

impl PeriodicGenerator {
    fn fire(&mut self, at: u64, epoch: u64) -> EventPayload {
        let ts = secs(epoch, at);
        let (key, doc): (Vec<String>, Value) = match &mut self.kind {
            PeriodicKind::GangliaNode { site, node } => {
                let metrics: Vec<Value> = crate::xform::GANGLIA_METRICS
                    .iter()
                    .map(|name| {
                        json!({"@name": *name, "@val": format!("{:.3}", self.rng.gen::<f64>() * 100.0)})
                    })
                    .collect();
                (
                    vec![
                        "ganglia".into(),
                        site.clone(),
                        node.clone(),
                        "metrics".into(),
                    ],
                    json!({"host": {"@name": node.clone(), "@site": site.clone(),
                                    "@reported": ts.to_string(), "metric": metrics}}),
                )
            }
            PeriodicKind::SnappLink {
                link,
                octets_in,
                octets_out,
            } => {
                *octets_in += self.rng.gen_range(1_000..2_000_000u64);
                *octets_out += self.rng.gen_range(1_000..2_000_000u64);
                (
                    vec!["snapp".into(), link.clone(), "traffic".into()],
                    json!({"link": {"@id": link.clone(), "octetsIn": *octets_in,
                                    "octetsOut": *octets_out, "ts": ts}}),
                )
            }
            PeriodicKind::PerfsonarLink { src, dst } => (
                vec![
                    "perfsonar".into(),
                    src.clone(),
                    dst.clone(),
                    "bandwidth".into(),
                ],
                json!({"measurement": {"@src": src.clone(), "@dst": dst.clone(), "@ts": ts.to_string(),
                                       "bandwidth": {"@units": "Mbps",
                                                     "#text": format!("{:.1}", 700.0 + self.rng.gen::<f64>() * 300.0)}}}),
            ),
            PeriodicKind::IncaTest {
                site,
                service,
                test,
            } => {
                let passed = self.rng.gen_bool(0.97);
                (
                    vec![
                        "inca".into(),
                        site.clone(),
                        service.clone(),
                        test.clone(),
                    ],
                    json!({"report": {"@site": site.clone(), "@service": service.clone(),
                                      "@test": test.clone(),
                                      "@completed": timeutil::format_rfc3339_micros(ts * 1_000_000),
                                      "result": if passed { "pass" } else { "fail" }}}),
                )
            }
            PeriodicKind::Glue2Partition { site, partition } => (
                vec![
                    "glue2".into(),
                    site.clone(),
                    partition.clone(),
                    "partition".into(),
                ],
                json!({"partition": {"@name": partition.clone(), "@site": site.clone(),
                                     "totalNodes": 64, "freeNodes": self.rng.gen_range(0..64),
                                     "state": "production", "ts": ts}}),
            ),
            PeriodicKind::Glue2Queue {
                site,
                partition,
                job_entries,
            } => {
                let jobs: Vec<Value> = (0..*job_entries)
                    .map(|i| json!({"id": format!("j{i:07}")}))
                    .collect();
                (
                    vec![
                        "glue2".into(),
                        site.clone(),
                        partition.clone(),
                        "queue".into(),
                    ],
                    json!({"queue": {"@name": format!("{partition}-batch"), "@site": site.clone(),
                                     "jobs": jobs, "ts": ts}}),
                )
            }
        };
        let document = match self.target_bytes {
            Some(target) => pad_document_to(Document::new(doc), target),
            None => Document::new(doc),
        };
        EventPayload {
            source_label: self.label,
            key: RoutingKey::from_words(key).expect("generator key"),
            document,
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum JobPhase {
    Submit = 0,
    Start = 1,
    End = 2,
}

struct JobMachine {
    rng: Pcg64,
    arrival_mean_micros: f64,
    queued_mean_micros: f64,
    running_mean_micros: f64,
    partitions: u32,
    sites: u32,
    target_bytes: Option<usize>,
    events: BinaryHeap<Reverse<(u64, u64, u8)>>,
    next_seq: u64,
}

impl JobMachine {
    fn new(profile: &InfrastructureProfile, seed: u64) -> Option<Self> {
        if profile.jobs_per_hour <= 0.0 {
            return None;
        }
        let mut rng = Pcg64::seed_from_u64(seed);
        let arrival_rate_per_sec = profile.jobs_per_hour / 3_600.0;
        let arrival_mean_micros = 1e6 / arrival_rate_per_sec;
        // Little's law: mean residence = population / arrival rate
        let residence_micros = profile.simultaneous_jobs as f64 / arrival_rate_per_sec * 1e6;
        let queued_mean_micros = 0.10 * residence_micros;
        let running_mean_micros = 0.90 * residence_micros;

        let mut events = BinaryHeap::new();
        let mut next_seq = 0;
        // steady-state population at t=0: 10% queued, 90% running, with
        // memoryless residual delays
        for _ in 0..profile.simultaneous_jobs {
            let seq = next_seq;
            next_seq += 1;
            if rng.gen_bool(0.10) {
                let at = exp_micros(&mut rng, queued_mean_micros);
                events.push(Reverse((at, seq, JobPhase::Start as u8)));
            } else {
                let at = exp_micros(&mut rng, running_mean_micros);
                events.push(Reverse((at, seq, JobPhase::End as u8)));
            }
        }
        let first_arrival = exp_micros(&mut rng, arrival_mean_micros);
        events.push(Reverse((first_arrival, next_seq, JobPhase::Submit as u8)));
        next_seq += 1;
        Some(JobMachine {
            rng,
            arrival_mean_micros,
            queued_mean_micros,
            running_mean_micros,
            partitions: profile.partitions.max(1),
            sites: profile.sites.max(1),
            target_bytes: None,
            events,
            next_seq,
        })
    }

    fn peek_at(&self) -> Option<u64> {
        self.events.peek().map(|Reverse((at, _, _))| *at)
    }

    fn fire(&mut self, epoch: u64) -> (Option<EventPayload>, Option<u64>) {
        let Reverse((at, seq, phase)) = match self.events.pop() {
            Some(e) => e,
            None => return (None, None),
        };
        let state = match phase {
            p if p == JobPhase::Submit as u8 => {
                // extend the arrival chain and queue this job
                let next_arrival = at + exp_micros(&mut self.rng, self.arrival_mean_micros);
                let next_seq = self.next_seq;
                self.next_seq += 1;
                self.events
                    .push(Reverse((next_arrival, next_seq, JobPhase::Submit as u8)));
                let start_at = at + exp_micros(&mut self.rng, self.queued_mean_micros);
                self.events.push(Reverse((start_at, seq, JobPhase::Start as u8)));
                "submit"
            }
            p if p == JobPhase::Start as u8 => {
                let end_at = at + exp_micros(&mut self.rng, self.running_mean_micros);
                self.events.push(Reverse((end_at, seq, JobPhase::End as u8)));
                "start"
            }
            _ => "end",
        };
        let partition_index = (seq % self.partitions as u64) as u32;
        let partition = format!("part{partition_index:02}");
        let site = format!("site{:02}", partition_index % self.sites);
        let doc = json!({"job": {"@id": format!("j{seq:07}"), "@partition": partition.clone(),
                                 "@site": site.clone(), "state": state,
                                 "ts": secs(epoch, at)}});
        let document = match self.target_bytes {
            Some(target) => pad_document_to(Document::new(doc), target),
            None => Document::new(doc),
        };
        let key = RoutingKey::from_words([
            "glue2".to_string(),
            site,
            partition,
            "job".to_string(),
            state.to_string(),
        ])
        .expect("job key");
        (
            Some(EventPayload {
                source_label: SOURCE_GLUE2_JOB,
                key,
                document,
            }),
            self.peek_at(),
        )
    }
}

enum Generator {
    Periodic(PeriodicGenerator),
    Jobs(JobMachine),
}

/// The full event schedule for one run: a time-ordered, seed-deterministic
/// stream of payloads with offsets in `[0, duration)`.
pub struct GeneratorSet {
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    generators: Vec<Generator>,
    horizon_micros: u64,
    epoch_micros: u64,
}

impl GeneratorSet {
    /// `epoch_micros` anchors the timestamps written inside documents;
    /// passing a fixed value makes generated bytes reproducible.
    pub fn build(
        profile: &InfrastructureProfile,
        seed: u64,
        duration: Duration,
        epoch_micros: u64,
    ) -> Self {
        let horizon = duration.as_micros() as u64;
        let mut generators: Vec<Generator> = Vec::new();
        let p = &profile.payload_bytes;

        let add_periodic = |label: &'static str,
                                name: String,
                                period_secs: f64,
                                kind: PeriodicKind,
                                target: Option<u64>,
                                generators: &mut Vec<Generator>| {
            let period_micros = (period_secs * 1e6) as u64;
            let mut rng = Pcg64::seed_from_u64(derive_seed(seed, &name));
            let phase = rng.gen_range(0..period_micros.max(1));
            generators.push(Generator::Periodic(PeriodicGenerator {
                label,
                period_micros,
                next_at: phase,
                rng,
                kind,
                target_bytes: target.map(|t| t as usize),
            }));
        };

        for i in 0..profile.node_count() {
            let site = profile.site_name(i);
            add_periodic(
                SOURCE_GANGLIA,
                format!("ganglia.{i}"),
                crate::workload::profile::GANGLIA_PERIOD_SECS,
                PeriodicKind::GangliaNode {
                    site,
                    node: format!("node{i:04}"),
                },
                p.ganglia,
                &mut generators,
            );
        }
        for i in 0..profile.link_count() {
            add_periodic(
                SOURCE_SNAPP,
                format!("snapp.{i}"),
                crate::workload::profile::SNAPP_PERIOD_SECS,
                PeriodicKind::SnappLink {
                    link: format!("link{i:02}"),
                    octets_in: 0,
                    octets_out: 0,
                },
                p.snapp,
                &mut generators,
            );
            let (a, b) = site_pair(i);
            add_periodic(
                SOURCE_PERFSONAR,
                format!("perfsonar.{i}"),
                crate::workload::profile::PERFSONAR_PERIOD_SECS,
                PeriodicKind::PerfsonarLink {
                    src: format!("site{:02}", a % profile.sites.max(1)),
                    dst: format!("site{:02}", b % profile.sites.max(1)),
                },
                p.perfsonar,
                &mut generators,
            );
        }
        for i in 0..profile.partitions {
            let site = profile.site_name(i);
            let partition = format!("part{i:02}");
            add_periodic(
                SOURCE_GLUE2_PARTITION,
                format!("glue2.partition.{i}"),
                crate::workload::profile::GLUE2_SNAPSHOT_PERIOD_SECS,
                PeriodicKind::Glue2Partition {
                    site: site.clone(),
                    partition: partition.clone(),
                },
                p.glue2_partition,
                &mut generators,
            );
            // the queue document lists the partition's job population; its
            // entry count is capped so padding always lands on target
            let queue_target = profile.queue_doc_bytes() as usize;
            let job_entries = (profile.jobs_per_partition() as usize)
                .min(queue_target.saturating_sub(200) / 18);
            add_periodic(
                SOURCE_GLUE2_QUEUE,
                format!("glue2.queue.{i}"),
                crate::workload::profile::GLUE2_SNAPSHOT_PERIOD_SECS,
                PeriodicKind::Glue2Queue {
                    site,
                    partition,
                    job_entries,
                },
                Some(queue_target as u64),
                &mut generators,
            );
        }
        let inca_period = profile.inca_mean_period_secs();
        for i in 0..profile.inca_test_count() {
            let service_index = i / 4;
            add_periodic(
                SOURCE_INCA,
                format!("inca.{i}"),
                inca_period,
                PeriodicKind::IncaTest {
                    site: profile.site_name(service_index),
                    service: format!("svc{service_index:03}"),
                    test: format!("test{:03}", i % 4),
                },
                p.inca,
                &mut generators,
            );
        }
        if let Some(mut jobs) = JobMachine::new(profile, derive_seed(seed, "glue2.jobs")) {
            jobs.target_bytes = p.glue2_job.map(|t| t as usize);
            generators.push(Generator::Jobs(jobs));
        }

        let mut heap = BinaryHeap::with_capacity(generators.len());
        for (idx, generator) in generators.iter().enumerate() {
            let first = match generator {
                Generator::Periodic(g) => Some(g.next_at),
                Generator::Jobs(j) => j.peek_at(),
            };
            if let Some(at) = first {
                if at < horizon {
                    heap.push(Reverse((at, idx)));
                }
            }
        }
        GeneratorSet {
            heap,
            generators,
            horizon_micros: horizon,
            epoch_micros,
        }
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Pops the next event in schedule order; `None` when the run is done.
    pub fn next_event(&mut self) -> Option<ScheduledEvent> {
        loop {
            let Reverse((at, idx)) = self.heap.pop()?;
            let (payload, next) = match &mut self.generators[idx] {
                Generator::Periodic(g) => {
                    let payload = g.fire(at, self.epoch_micros);
                    g.next_at = at + g.period_micros;
                    (Some(payload), Some(g.next_at))
                }
                Generator::Jobs(j) => j.fire(self.epoch_micros),
            };
            if let Some(next_at) = next {
                if next_at < self.horizon_micros {
                    self.heap.push(Reverse((next_at, idx)));
                }
            }
            if let Some(payload) = payload {
                return Some(ScheduledEvent {
                    at_micros: at,
                    payload,
                });
            }
        }
    }
}

/// Distinct unordered site pairs for bandwidth-test endpoints.
fn site_pair(index: u32) -> (u32, u32) {
    let mut count = 0;
    for b in 1u32.. {
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
    use crate::workload::profile::bundled_profile;
    use std::collections::BTreeMap;

    const EPOCH: u64 = 1_367_402_400_000_000;

    fn drain(profile: &str, seed: u64, secs: u64) -> Vec<ScheduledEvent> {
        let p = bundled_profile(profile).unwrap();
        let mut set = GeneratorSet::build(&p, seed, Duration::from_secs(secs), EPOCH);
        let mut out = Vec::new();
        while let Some(ev) = set.next_event() {
            out.push(ev);
        }
        out
    }

    #[test]
    fn events_are_time_ordered_and_inside_horizon() {
        let events = drain("futuregrid", 7, 30);
        assert!(!events.is_empty());
        let horizon = 30_000_000;
        let mut last = 0;
        for ev in &events {
            assert!(ev.at_micros >= last);
            assert!(ev.at_micros < horizon);
            last = ev.at_micros;
        }
    }

    #[test]
    fn same_seed_reproduces_the_event_stream() {
        let a = drain("futuregrid", 7, 20);
        let b = drain("futuregrid", 7, 20);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.at_micros, y.at_micros);
            assert_eq!(x.payload.key, y.payload.key);
            assert_eq!(
                x.payload.document.canonical_bytes(),
                y.payload.document.canonical_bytes()
            );
        }
    }

    #[test]
    fn different_seeds_shift_the_schedule() {
        let a = drain("futuregrid", 7, 10);
        let b = drain("futuregrid", 8, 10);
        let times_a: Vec<u64> = a.iter().map(|e| e.at_micros).collect();
        let times_b: Vec<u64> = b.iter().map(|e| e.at_micros).collect();
        assert_ne!(times_a, times_b);
    }

    #[test]
    fn one_period_fires_every_periodic_generator_once() {
        // 120 s is one full snapshot period and a multiple of the ganglia
        // and snapp periods, so counts are exact
        let events = drain("futuregrid", 21, 120);
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for ev in &events {
            *counts.entry(ev.payload.source_label).or_default() += 1;
        }
        assert_eq!(counts[SOURCE_GANGLIA], 608 * 8);
        assert_eq!(counts[SOURCE_SNAPP], 6 * 12);
        assert_eq!(counts[SOURCE_GLUE2_PARTITION], 14);
        assert_eq!(counts[SOURCE_GLUE2_QUEUE], 14);
    }

    #[test]
    fn documents_hit_their_payload_targets_exactly() {
        let p = bundled_profile("futuregrid").unwrap();
        let targets: BTreeMap<&str, u64> = BTreeMap::from([
            (SOURCE_GANGLIA, p.payload_bytes.ganglia.unwrap()),
            (SOURCE_SNAPP, p.payload_bytes.snapp.unwrap()),
            (SOURCE_PERFSONAR, p.payload_bytes.perfsonar.unwrap()),
            (SOURCE_INCA, p.payload_bytes.inca.unwrap()),
            (SOURCE_GLUE2_PARTITION, p.payload_bytes.glue2_partition.unwrap()),
            (SOURCE_GLUE2_QUEUE, p.queue_doc_bytes()),
            (SOURCE_GLUE2_JOB, p.payload_bytes.glue2_job.unwrap()),
        ]);
        let events = drain("futuregrid", 3, 130);
        let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
        for ev in &events {
            let size = ev.payload.document.canonical_len() as u64;
            assert_eq!(
                size, targets[ev.payload.source_label],
                "source {} key {}",
                ev.payload.source_label, ev.payload.key
            );
            *seen.entry(ev.payload.source_label).or_default() += 1;
        }
        for label in [SOURCE_GANGLIA, SOURCE_SNAPP, SOURCE_GLUE2_QUEUE, SOURCE_GLUE2_JOB] {
            assert!(seen.contains_key(label), "{label} never fired");
        }
    }

    #[test]
    fn job_lifecycle_emits_all_three_states() {
        // a tiny custom profile with fast turnover: residence = 2/ (3600/3600) = 2 s
        let mut p = bundled_profile("futuregrid").unwrap();
        p.nodes = None;
        p.network_links = None;
        p.services = 0;
        p.tests_per_service = 0.0;
        p.partitions = 2;
        p.simultaneous_jobs = 2;
        p.jobs_per_hour = 3_600.0;
        let mut set = GeneratorSet::build(&p, 5, Duration::from_secs(40), EPOCH);
        let mut states: BTreeMap<String, u64> = BTreeMap::new();
        while let Some(ev) = set.next_event() {
            if ev.payload.source_label == SOURCE_GLUE2_JOB {
                let state = ev.payload.key.words().last().unwrap().clone();
                *states.entry(state).or_default() += 1;
            }
        }
        assert!(states.get("submit").copied().unwrap_or(0) > 10);
        assert!(states.get("start").copied().unwrap_or(0) > 10);
        assert!(states.get("end").copied().unwrap_or(0) > 10);
        // submit/start/end rates agree within loose Poisson bounds
        let submit = states["submit"] as f64;
        let end = states["end"] as f64;
        assert!((submit - end).abs() < 0.5 * submit, "{states:?}");
    }

    #[test]
    fn padding_is_exact_for_flat_objects() {
        for target in [100usize, 256, 2048, 16384] {
            let doc = pad_document_to(Document::new(json!({"a": 1})), target);
            assert_eq!(doc.canonical_len(), target);
        }
        // already larger than the target: left alone
        let doc = Document::new(json!({"big": "x".repeat(300)}));
        assert_eq!(pad_document_to(doc.clone(), 100).canonical_len(), doc.canonical_len());
    }

    #[test]
    fn zero_duration_produces_no_events() {
        let p = bundled_profile("futuregrid").unwrap();
        let mut set = GeneratorSet::build(&p, 1, Duration::ZERO, EPOCH);
        assert!(set.next_event().is_none());
    }

    #[test]
    fn keys_parse_under_the_routing_grammar() {
        for ev in drain("futuregrid", 11, 16) {
            let words = ev.payload.key.words();
            match ev.payload.source_label {
                SOURCE_GANGLIA => {
                    assert_eq!(words.len(), 4);
                    assert_eq!(words[3], "metrics");
                }
                SOURCE_SNAPP => assert_eq!(words.len(), 3),
                SOURCE_PERFSONAR => assert_eq!(words[3], "bandwidth"),
                SOURCE_INCA => assert_eq!(words.len(), 4),
                SOURCE_GLUE2_PARTITION => assert_eq!(words[3], "partition"),
                SOURCE_GLUE2_QUEUE => assert_eq!(words[3], "queue"),
                SOURCE_GLUE2_JOB => {
                    assert_eq!(words[3], "job");
                    assert!(["submit", "start", "end"].contains(&words[4].as_str()));
                }
                other => panic!("unexpected source {other}"),
            }
        }
    }
}
