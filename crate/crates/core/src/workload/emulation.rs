//! Running an infrastructure emulation against a broker, a store, or both.
//!
//! Generators fire on their schedules and publish through a small worker
//! pool; subscriber clients drain their queues concurrently and acknowledge
//! every message. The report is assembled after the broker settles (all
//! deliveries acknowledged) so conservation properties hold exactly.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;
use thiserror::Error;

use crate::broker::client::{BrokerClient, ClientError};
use crate::broker::wire::SubscribeMode;
use crate::broker::{AckMode, Broker, BrokerError, BrokerStatsSnapshot};
use crate::message::Message;
use crate::routing::RoutingPattern;
use crate::store::{QueryFilter, Store, StoreError};
use crate::timeutil;
use crate::workload::generate::{GeneratorSet, ScheduledEvent, SOURCE_LABELS};
use crate::workload::matrix::{build_subscription_matrix, expected_fan_out_ratio, SubscriberInstance};
use crate::workload::profile::{expected_publish_rate, InfrastructureProfile};
use crate::workload::report::{EmulationReport, SourceReportRow, StoreModeReport};

/// Exchange all emulation traffic flows through.
pub const EMULATION_EXCHANGE: &str = "monitor";
/// Queue used when the store ingests from the broker (bound with `#`).
pub const STORE_INGEST_QUEUE: &str = "store.ingest";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Broker,
    Store,
    Both,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Broker => "broker",
            BackendKind::Store => "store",
            BackendKind::Both => "both",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "broker" => Some(BackendKind::Broker),
            "store" => Some(BackendKind::Store),
            "both" => Some(BackendKind::Both),
            _ => None,
        }
    }

    fn wants_broker(&self) -> bool {
        matches!(self, BackendKind::Broker | BackendKind::Both)
    }

    fn wants_store(&self) -> bool {
        matches!(self, BackendKind::Store | BackendKind::Both)
    }
}

#[derive(Debug, Error)]
pub enum EmulationError {
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(#[from] ClientError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("system clock is before the epoch")]
    ClockWentBackwards,
}

#[derive(Debug, Clone)]
pub struct EmulationOptions {
    pub duration: Duration,
    pub seed: u64,
    pub backend: BackendKind,
    /// Address of a remote broker; `None` embeds one in-process.
    pub connect: Option<String>,
    pub settle_timeout: Duration,
    pub publish_workers: usize,
    /// How often each store-mode subscriber runs its selects.
    pub select_period: Duration,
}

impl Default for EmulationOptions {
    fn default() -> Self {
        EmulationOptions {
            duration: Duration::from_secs(60),
            seed: 0,
            backend: BackendKind::Broker,
            connect: None,
            settle_timeout: Duration::from_secs(10),
            publish_workers: 2,
            select_period: Duration::from_secs(60),
        }
    }
}

/// The run's products: the report, plus the store when one was active so
/// callers can persist or query it.
pub struct EmulationOutcome {
    pub report: EmulationReport,
    pub store: Option<Arc<Store>>,
}

#[derive(Default)]
struct SourceAccum {
    count: u64,
    bytes: u64,
    op_micros: u64,
}

#[derive(Default)]
struct ConsumedAccum {
    count: AtomicU64,
    bytes: AtomicU64,
}

#[derive(Default)]
struct UpdateAccum {
    count: AtomicU64,
    bytes: AtomicU64,
    micros: AtomicU64,
}

impl UpdateAccum {
    fn record(&self, bytes: u64, micros: u64) {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes, Ordering::Relaxed);
        self.micros.fetch_add(micros, Ordering::Relaxed);
    }
}

enum PublishTarget {
    InProcess(Arc<Broker>),
    Remote(String),
}

enum WorkerSink {
    Broker(PublisherHandle),
    Store(Arc<Store>),
}

enum PublisherHandle {
    InProcess(Arc<Broker>),
    Remote(BrokerClient),
}

impl PublisherHandle {
    fn publish(&self, message: Message) -> Result<(), EmulationError> {
        match self {
            PublisherHandle::InProcess(broker) => {
                broker.publish(EMULATION_EXCHANGE, message)?;
            }
            PublisherHandle::Remote(client) => {
                client.publish(EMULATION_EXCHANGE, &message)?;
            }
        }
        Ok(())
    }
}

/// Runs the emulation to completion and assembles the report.
pub fn run_emulation(
    profile: &InfrastructureProfile,
    options: &EmulationOptions,
) -> Result<EmulationOutcome, EmulationError> {
    let start_wall_micros = timeutil::now_micros();
    if start_wall_micros == 0 {
        return Err(EmulationError::ClockWentBackwards);
    }
    let oracle = expected_publish_rate(profile);
    let matrix = build_subscription_matrix(profile);
    let fan_out_oracle = expected_fan_out_ratio(profile);

    // broker-side setup
    let target: Option<PublishTarget> = if options.backend.wants_broker() {
        Some(match &options.connect {
            None => {
                let broker = Arc::new(Broker::with_defaults());
                broker.declare_exchange(EMULATION_EXCHANGE)?;
                PublishTarget::InProcess(broker)
            }
            Some(addr) => {
                let admin = BrokerClient::connect(addr.as_str())?;
                admin.declare_exchange(EMULATION_EXCHANGE)?;
                admin.flush()?;
                PublishTarget::Remote(addr.clone())
            }
        })
    } else {
        None
    };

    let store: Option<Arc<Store>> = if options.backend.wants_store() {
        Some(Arc::new(Store::new()))
    } else {
        None
    };

    // subscriber queues and drain threads
    let update_accum = Arc::new(UpdateAccum::default());
    let stop = Arc::new(AtomicBool::new(false));
    let consumed = Arc::new(ConsumedAccum::default());
    let mut subscriber_threads = Vec::new();
    if let Some(target) = &target {
        bind_matrix(target, &matrix)?;
        if options.backend == BackendKind::Both {
            bind_ingest_queue(target)?;
        }
        for instance in &matrix {
            subscriber_threads.push(spawn_subscriber(
                target,
                instance.queue.clone(),
                Arc::clone(&stop),
                Arc::clone(&consumed),
                None,
            )?);
        }
        if options.backend == BackendKind::Both {
            let ingest = store.clone().map(|s| (s, Arc::clone(&update_accum)));
            subscriber_threads.push(spawn_subscriber(
                target,
                STORE_INGEST_QUEUE.to_string(),
                Arc::clone(&stop),
                Arc::new(ConsumedAccum::default()), // ingest is not a consumer role
                ingest,
            )?);
        }
    }

    // store-mode select clients: one per subscriber instance, firing their
    // queries once per period with seed-randomized phase
    let selects_total = Arc::new(AtomicU64::new(0));
    let mut select_threads = Vec::new();
    if options.backend == BackendKind::Store {
        if let Some(store) = &store {
            for (index, instance) in matrix.iter().enumerate() {
                select_threads.push(spawn_select_client(
                    Arc::clone(store),
                    instance,
                    index,
                    options,
                    Arc::clone(&stop),
                    Arc::clone(&selects_total),
                ));
            }
        }
    }

    // publish workers
    let accum: Arc<Mutex<BTreeMap<&'static str, SourceAccum>>> = Arc::new(Mutex::new(BTreeMap::new()));
    let (event_tx, event_rx) = bounded::<ScheduledEvent>(1024);
    let mut worker_threads = Vec::new();
    for worker_index in 0..options.publish_workers.max(1) {
        let rx = event_rx.clone();
        let accum = Arc::clone(&accum);
        let update_accum = Arc::clone(&update_accum);
        let sink = build_worker_sink(options, &target, &store)?;
        worker_threads.push(
            std::thread::Builder::new()
                .name(format!("emu-worker-{worker_index}"))
                .spawn(move || -> Result<(), EmulationError> {
                    while let Ok(event) = rx.recv() {
                        let message =
                            Message::new(event.payload.key.clone(), &event.payload.document);
                        let bytes = message.payload_size();
                        let began = Instant::now();
                        match &sink {
                            WorkerSink::Broker(publisher) => {
                                publisher.publish(message)?;
                            }
                            WorkerSink::Store(store) => {
                                store.ingest_message(&message)?;
                            }
                        }
                        let micros = began.elapsed().as_micros() as u64;
                        let mut accum = accum.lock().unwrap();
                        let entry = accum.entry(event.payload.source_label).or_default();
                        entry.count += 1;
                        entry.bytes += bytes;
                        entry.op_micros += micros;
                        if matches!(sink, WorkerSink::Store(_)) {
                            update_accum.record(bytes, micros);
                        }
                    }
                    Ok(())
                })
                .expect("spawn worker"),
        );
    }
    drop(event_rx);

    // the schedule: fire every event whose offset lands inside the run
    let mut generator_set = GeneratorSet::build(profile, options.seed, options.duration, start_wall_micros);
    let start = Instant::now();
    while let Some(event) = generator_set.next_event() {
        let due = start + Duration::from_micros(event.at_micros);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        if event_tx.send(event).is_err() {
            break; // workers gone: a publish failed
        }
    }
    drop(event_tx);
    let mut worker_error: Option<EmulationError> = None;
    for thread in worker_threads {
        if let Ok(Err(e)) = thread.join().map_err(|_| ()) {
            worker_error = Some(e);
        }
    }
    if let Some(e) = worker_error {
        stop.store(true, Ordering::SeqCst);
        for t in subscriber_threads {
            let _ = t.join();
        }
        for t in select_threads {
            let _ = t.join();
        }
        return Err(e);
    }

    // settle: wait until everything delivered has been acknowledged
    let final_stats: Option<BrokerStatsSnapshot> = match &target {
        Some(target) => {
            let deadline = Instant::now() + options.settle_timeout;
            loop {
                let stats = target_stats(target)?;
                if stats.delivered_count == stats.acked_count || Instant::now() >= deadline {
                    break Some(stats);
                }
                std::thread::sleep(Duration::from_millis(50));
            }
        }
        None => None,
    };
    stop.store(true, Ordering::SeqCst);
    for thread in subscriber_threads {
        let _ = thread.join();
    }
    for thread in select_threads {
        let _ = thread.join();
    }

    // assemble
    let duration_secs = options.duration.as_secs_f64();
    let accum = Arc::try_unwrap(accum)
        .map_err(|_| ())
        .expect("workers joined")
        .into_inner()
        .unwrap();
    let mut sources = Vec::new();
    let (mut total_count, mut total_bytes, mut total_micros) = (0u64, 0u64, 0u64);
    for label in SOURCE_LABELS {
        if let Some(acc) = accum.get(label) {
            sources.push(SourceReportRow::from_counters(
                label,
                acc.count,
                acc.bytes,
                acc.op_micros,
                duration_secs,
            ));
            total_count += acc.count;
            total_bytes += acc.bytes;
            total_micros += acc.op_micros;
        }
    }
    let total = SourceReportRow::from_counters("total", total_count, total_bytes, total_micros, duration_secs);

    let consumed_count = consumed.count.load(Ordering::Relaxed);
    let consumed_bytes = consumed.bytes.load(Ordering::Relaxed);
    let (published_count, delivered_count, dropped_count) = match &final_stats {
        Some(stats) => (stats.published_count, stats.delivered_count, stats.dropped_count),
        None => (total_count, 0, 0),
    };
    let fan_out_measured = if published_count > 0 && final_stats.is_some() {
        delivered_count as f64 / published_count as f64
    } else {
        0.0
    };

    let store_report = store.as_ref().map(|store| {
        let count = update_accum.count.load(Ordering::Relaxed);
        let bytes = update_accum.bytes.load(Ordering::Relaxed);
        let micros = update_accum.micros.load(Ordering::Relaxed);
        let selects = selects_total.load(Ordering::Relaxed);
        StoreModeReport {
            updates: count,
            update_rate_per_sec: if duration_secs > 0.0 { count as f64 / duration_secs } else { 0.0 },
            mean_update_ms: if count > 0 { micros as f64 / count as f64 / 1_000.0 } else { 0.0 },
            mean_update_bytes: if count > 0 { bytes as f64 / count as f64 } else { 0.0 },
            update_mb_per_sec: if duration_secs > 0.0 { bytes as f64 / duration_secs / 1_048_576.0 } else { 0.0 },
            selects,
            select_rate_per_sec: if duration_secs > 0.0 { selects as f64 / duration_secs } else { 0.0 },
            records_final: store.record_count() as u64,
        }
    });

    let report = EmulationReport {
        profile: profile.name.clone(),
        backend: options.backend.as_str().to_string(),
        duration_secs,
        seed: options.seed,
        sources,
        total,
        consumed_count,
        consumed_bytes,
        consumed_rate_per_sec: if duration_secs > 0.0 {
            consumed_count as f64 / duration_secs
        } else {
            0.0
        },
        consumed_mb_per_sec: if duration_secs > 0.0 {
            consumed_bytes as f64 / duration_secs / 1_048_576.0
        } else {
            0.0
        },
        published_count,
        delivered_count,
        dropped_count,
        fan_out_measured,
        fan_out_oracle,
        expected_rate_per_sec: oracle.total,
        expected_per_source: oracle.per_source,
        store: store_report,
    };
    Ok(EmulationOutcome { report, store })
}

fn build_worker_sink(
    options: &EmulationOptions,
    target: &Option<PublishTarget>,
    store: &Option<Arc<Store>>,
) -> Result<WorkerSink, EmulationError> {
    Ok(match (options.backend, target, store) {
        (BackendKind::Store, _, Some(store)) => WorkerSink::Store(Arc::clone(store)),
        (_, Some(t), _) => WorkerSink::Broker(publisher_for(t)?),
        _ => unreachable!("backend setup covers all variants"),
    })
}

fn publisher_for(target: &PublishTarget) -> Result<PublisherHandle, EmulationError> {
    Ok(match target {
        PublishTarget::InProcess(broker) => PublisherHandle::InProcess(Arc::clone(broker)),
        PublishTarget::Remote(addr) => PublisherHandle::Remote(BrokerClient::connect(addr.as_str())?),
    })
}

fn bind_matrix(target: &PublishTarget, matrix: &[SubscriberInstance]) -> Result<(), EmulationError> {
    match target {
        PublishTarget::InProcess(broker) => {
            for instance in matrix {
                for pattern in &instance.patterns {
                    broker.bind(&instance.queue, EMULATION_EXCHANGE, pattern)?;
                }
            }
        }
        PublishTarget::Remote(addr) => {
            let admin = BrokerClient::connect(addr.as_str())?;
            for instance in matrix {
                for pattern in &instance.patterns {
                    admin.bind(&instance.queue, EMULATION_EXCHANGE, pattern)?;
                }
            }
            // a stats round-trip guarantees all binds are applied
            admin.stats(Duration::from_secs(5))?;
        }
    }
    Ok(())
}

fn bind_ingest_queue(target: &PublishTarget) -> Result<(), EmulationError> {
    let all = RoutingPattern::parse("#").expect("# pattern");
    match target {
        PublishTarget::InProcess(broker) => broker.bind(STORE_INGEST_QUEUE, EMULATION_EXCHANGE, &all)?,
        PublishTarget::Remote(addr) => {
            let admin = BrokerClient::connect(addr.as_str())?;
            admin.bind(STORE_INGEST_QUEUE, EMULATION_EXCHANGE, &all)?;
            admin.stats(Duration::from_secs(5))?;
        }
    }
    Ok(())
}

fn target_stats(target: &PublishTarget) -> Result<BrokerStatsSnapshot, EmulationError> {
    match target {
        PublishTarget::InProcess(broker) => Ok(broker.stats()),
        PublishTarget::Remote(addr) => {
            let client = BrokerClient::connect(addr.as_str())?;
            Ok(client.stats(Duration::from_secs(5))?)
        }
    }
}

/// Drains one subscriber queue, acknowledging every message. When a store is
/// supplied the deliveries are ingested (the store-ingest path).
fn spawn_subscriber(
    target: &PublishTarget,
    queue: String,
    stop: Arc<AtomicBool>,
    consumed: Arc<ConsumedAccum>,
    ingest_into: Option<(Arc<Store>, Arc<UpdateAccum>)>,
) -> Result<std::thread::JoinHandle<()>, EmulationError> {
    let poll = Duration::from_millis(100);
    match target {
        PublishTarget::InProcess(broker) => {
            let broker = Arc::clone(broker);
            Ok(std::thread::Builder::new()
                .name(format!("emu-sub-{queue}"))
                .spawn(move || {
                    let mut consumer = match broker.consume(&queue, AckMode::Explicit) {
                        Ok(c) => c,
                        Err(_) => return,
                    };
                    loop {
                        match consumer.recv_timeout(poll) {
                            Some(delivery) => {
                                consumed.count.fetch_add(1, Ordering::Relaxed);
                                consumed
                                    .bytes
                                    .fetch_add(delivery.message.payload_size(), Ordering::Relaxed);
                                if let Some((store, updates)) = &ingest_into {
                                    let began = Instant::now();
                                    if store.ingest_message(&delivery.message).is_ok() {
                                        updates.record(
                                            delivery.message.payload_size(),
                                            began.elapsed().as_micros() as u64,
                                        );
                                    }
                                }
                                let _ = consumer.ack(delivery.tag);
                            }
                            None if stop.load(Ordering::SeqCst) => break,
                            None => continue,
                        }
                    }
                })
                .expect("spawn subscriber"))
        }
        PublishTarget::Remote(addr) => {
            let client = BrokerClient::connect(addr.as_str())?;
            Ok(std::thread::Builder::new()
                .name(format!("emu-sub-{queue}"))
                .spawn(move || {
                    let consumer = match client.subscribe(&queue, SubscribeMode::Explicit) {
                        Ok(c) => c,
                        Err(_) => return,
                    };
                    loop {
                        match consumer.recv_timeout(poll) {
                            Some(delivery) => {
                                consumed.count.fetch_add(1, Ordering::Relaxed);
                                consumed
                                    .bytes
                                    .fetch_add(delivery.message.payload_size(), Ordering::Relaxed);
                                if let Some((store, updates)) = &ingest_into {
                                    let began = Instant::now();
                                    if store.ingest_message(&delivery.message).is_ok() {
                                        updates.record(
                                            delivery.message.payload_size(),
                                            began.elapsed().as_micros() as u64,
                                        );
                                    }
                                }
                                let _ = client.ack(&queue, delivery.delivery_tag);
                            }
                            None if stop.load(Ordering::SeqCst) => break,
                            None => continue,
                        }
                    }
                })
                .expect("spawn subscriber"))
        }
    }
}

/// Role-appropriate selects, once per period: the store-mode stand-in for a
/// subscriber polling for current information.
fn spawn_select_client(
    store: Arc<Store>,
    instance: &SubscriberInstance,
    index: usize,
    options: &EmulationOptions,
    stop: Arc<AtomicBool>,
    selects_total: Arc<AtomicU64>,
) -> std::thread::JoinHandle<()> {
    let role = instance.role;
    let period = options.select_period;
    let horizon = options.duration;
    // fixed per-instance phase spread; deterministic across runs
    let phase = period.mul_f64((index as f64 * 0.137) % 1.0);
    std::thread::Builder::new()
        .name(format!("emu-select-{}", instance.queue))
        .spawn(move || {
            let started = Instant::now();
            let mut next = phase;
            while !stop.load(Ordering::SeqCst) {
                if started.elapsed() >= horizon {
                    break;
                }
                if started.elapsed() < next {
                    std::thread::sleep(Duration::from_millis(50));
                    continue;
                }
                next += period;
                let filters = role_filters(role);
                for filter in filters {
                    let _ = store.query(&filter);
                    selects_total.fetch_add(1, Ordering::Relaxed);
                }
            }
        })
        .expect("spawn select client")
}

fn role_filters(role: &str) -> Vec<QueryFilter> {
    let latest = |f: QueryFilter| f.latest_only().limit(10_000);
    match role {
        "info_database" | "web_portal" => vec![latest(QueryFilter::new())],
        "accounting" => vec![
            QueryFilter::new().source("glue2").kind("job.submit").limit(10_000),
            QueryFilter::new().source("glue2").kind("job.start").limit(10_000),
            QueryFilter::new().source("glue2").kind("job.end").limit(10_000),
        ],
        "metascheduler" => vec![latest(QueryFilter::new().source("glue2"))],
        "monitoring" => ["inca", "perfsonar", "snapp", "ganglia"]
            .into_iter()
            .map(|s| latest(QueryFilter::new().source(s)))
            .collect(),
        "science_gateway" => vec![
            latest(QueryFilter::new().source("glue2")),
            latest(QueryFilter::new().source("inca")),
        ],
        _ => vec![latest(QueryFilter::new())],
    }
}
