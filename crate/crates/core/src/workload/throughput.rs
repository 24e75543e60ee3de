//! Maximum-throughput experiments: N producers to N consumers, each consumer
//! subscribed to exactly its own producer's stream, messages of a fixed size
//! sent as fast as possible. The store variant updates producer-keyed rows
//! as fast as possible while paired readers select them back by key.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;
use serde_json::json;
use thiserror::Error;

use crate::broker::client::{BrokerClient, ClientError};
use crate::broker::server::{serve, ServerConfig};
use crate::broker::wire::SubscribeMode;
use crate::broker::Broker;
use crate::document::Document;
use crate::message::Message;
use crate::routing::{RoutingKey, RoutingPattern};
use crate::store::{KeyFields, QueryFilter, Store};
use crate::timeutil;
use crate::workload::generate::pad_document_to;
use crate::workload::report::{percentile_ms, PairStats, ThroughputReport};

const BENCH_EXCHANGE: &str = "bench";
const FLUSH_EVERY: u64 = 4;
const DRAIN_TIMEOUT: Duration = Duration::from_secs(10);
/// Per-pair in-flight credit, like a consumer prefetch window. The wire
/// protocol has no broker-to-producer credit, so the harness bounds
/// outstanding messages itself; unbounded blasting would only measure
/// queue-fill burst rate, not sustained delivery.
const PAIR_WINDOW: u64 = 8;

#[derive(Debug, Error)]
pub enum ThroughputError {
    #[error("pair count must be at least 1")]
    NoPairs,
    #[error("backend unreachable: {0}")]
    BackendUnreachable(#[from] ClientError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker thread panicked")]
    WorkerPanic,
}

#[derive(Debug, Clone)]
pub struct ThroughputOptions {
    pub pairs: usize,
    pub message_bytes: usize,
    pub duration: Duration,
}

fn bench_payload(pair: usize, message_bytes: usize) -> Document {
    pad_document_to(
        Document::new(json!({"bench": {"@id": format!("p{pair:02}")}})),
        message_bytes,
    )
}

/// Runs the broker experiment against an already-listening broker address.
pub fn run_broker_throughput(
    addr: &str,
    options: &ThroughputOptions,
) -> Result<ThroughputReport, ThroughputError> {
    if options.pairs == 0 {
        return Err(ThroughputError::NoPairs);
    }
    let pairs = options.pairs;

    // declare and bind everything up front; the stats round-trip guarantees
    // the binds are applied before any producer starts
    let admin = BrokerClient::connect(addr)?;
    admin.declare_exchange(BENCH_EXCHANGE)?;
    for pair in 0..pairs {
        let pattern = RoutingPattern::parse(&format!("bench.p{pair:02}")).expect("bench pattern");
        admin.bind(&format!("bench.q{pair:02}"), BENCH_EXCHANGE, &pattern)?;
    }
    admin
        .stats(Duration::from_secs(5))
        .map_err(ThroughputError::BackendUnreachable)?;

    let barrier = Arc::new(Barrier::new(pairs + 1));
    let received_counts: Arc<Vec<AtomicU64>> =
        Arc::new((0..pairs).map(|_| AtomicU64::new(0)).collect());
    let latencies: Arc<Mutex<Vec<u64>>> = Arc::new(Mutex::new(Vec::new()));

    // consumers run inline on their client reader threads: count, sample
    // latency, ack (flushed every FLUSH_EVERY), and return one credit
    let mut consumer_clients = Vec::with_capacity(pairs);
    let mut credit_txs = Vec::with_capacity(pairs);
    let mut credit_rxs = Vec::with_capacity(pairs);
    for pair in 0..pairs {
        let client = BrokerClient::connect(addr)?;
        client.set_auto_flush(false);
        let queue = format!("bench.q{pair:02}");
        let acker = client.ack_sender(&queue);
        let (credit_tx, credit_rx) = bounded::<()>(PAIR_WINDOW as usize + 1);
        for _ in 0..PAIR_WINDOW {
            let _ = credit_tx.try_send(());
        }
        let received_counts = Arc::clone(&received_counts);
        let latencies = Arc::clone(&latencies);
        let handler_credit_tx = credit_tx.clone();
        let mut received = 0u64;
        let mut local_latencies: Vec<u64> = Vec::new();
        client.subscribe_inline(&queue, SubscribeMode::Explicit, move |delivery| {
            received += 1;
            let now = timeutil::now_micros();
            local_latencies
                .push(now.saturating_sub(delivery.message.published_at_micros()));
            let _ = acker.ack(delivery.delivery_tag);
            if received.is_multiple_of(FLUSH_EVERY) {
                let _ = acker.flush();
                latencies.lock().unwrap().append(&mut local_latencies);
            }
            received_counts[pair].store(received, Ordering::Release);
            let _ = handler_credit_tx.try_send(());
        })?;
        // round-trip so the subscription is active before the blast starts
        client.stats(Duration::from_secs(5))?;
        consumer_clients.push(client);
        credit_txs.push(credit_tx);
        credit_rxs.push(credit_rx);
    }

    let mut producer_threads = Vec::new();
    for (pair, credits) in credit_rxs.into_iter().enumerate() {
        let client = BrokerClient::connect(addr)?;
        let barrier = Arc::clone(&barrier);
        let duration = options.duration;
        let payload_bytes = bench_payload(pair, options.message_bytes).canonical_bytes();
        producer_threads.push(
            std::thread::Builder::new()
                .name(format!("bench-producer-{pair}"))
                .spawn(move || -> u64 {
                    let key = RoutingKey::parse(&format!("bench.p{pair:02}")).expect("bench key");
                    client.set_auto_flush(false);
                    barrier.wait();
                    let deadline = Instant::now() + duration;
                    let mut sent = 0u64;
                    while Instant::now() < deadline {
                        // one credit per in-flight message; the consumer
                        // returns it on receipt
                        match credits.recv_timeout(Duration::from_millis(100)) {
                            Ok(()) => {}
                            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                                let _ = client.flush();
                                continue;
                            }
                            Err(_) => break,
                        }
                        let message = Message::from_raw(
                            key.clone(),
                            payload_bytes.clone(),
                            timeutil::now_micros(),
                        );
                        if client.publish(BENCH_EXCHANGE, &message).is_err() {
                            break;
                        }
                        sent += 1;
                        if sent.is_multiple_of(FLUSH_EVERY) {
                            let _ = client.flush();
                        }
                    }
                    let _ = client.flush();
                    sent
                })
                .expect("spawn producer"),
        );
    }

    let started = Instant::now();
    barrier.wait();
    let mut sent_per_pair = Vec::with_capacity(pairs);
    for thread in producer_threads {
        sent_per_pair.push(thread.join().map_err(|_| ThroughputError::WorkerPanic)?);
    }
    // drain: wait until every pair's receipts match its sends
    let drain_deadline = Instant::now() + DRAIN_TIMEOUT;
    loop {
        let drained = (0..pairs)
            .all(|pair| received_counts[pair].load(Ordering::Acquire) >= sent_per_pair[pair]);
        if drained || Instant::now() >= drain_deadline {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let received_per_pair: Vec<u64> = (0..pairs)
        .map(|pair| received_counts[pair].load(Ordering::Acquire))
        .collect();
    // final ack flushes, then drop the consumers
    for client in &consumer_clients {
        let _ = client.flush();
    }
    // let the last acks reach the broker before tearing down
    std::thread::sleep(Duration::from_millis(50));
    drop(consumer_clients);
    drop(credit_txs);

    let mut samples = std::mem::take(&mut *latencies.lock().unwrap());
    Ok(assemble_report(
        "broker",
        options,
        elapsed,
        &sent_per_pair,
        &received_per_pair,
        &mut samples,
    ))
}

/// Spins a private loopback broker on an ephemeral port and benchmarks it.
pub fn run_loopback_throughput(
    options: &ThroughputOptions,
) -> Result<ThroughputReport, ThroughputError> {
    let broker = Arc::new(Broker::with_defaults());
    let server = serve(broker, "127.0.0.1:0", ServerConfig::default())?;
    let addr = server.local_addr().to_string();
    let report = run_broker_throughput(&addr, options);
    server.stop();
    report
}

/// Store experiment: writers update one row each as fast as possible,
/// paired readers select that row by key as fast as they can.
pub fn run_store_throughput(options: &ThroughputOptions) -> Result<ThroughputReport, ThroughputError> {
    if options.pairs == 0 {
        return Err(ThroughputError::NoPairs);
    }
    let pairs = options.pairs;
    let store = Arc::new(Store::new());
    let barrier = Arc::new(Barrier::new(pairs * 2 + 1));
    let writers_done = Arc::new(AtomicBool::new(false));
    let latencies: Arc<Mutex<Vec<u64>>> = Arc::new(Mutex::new(Vec::new()));
    let final_versions: Arc<Vec<AtomicU64>> = Arc::new((0..pairs).map(|_| AtomicU64::new(0)).collect());

    let mut writer_threads = Vec::new();
    for pair in 0..pairs {
        let store = Arc::clone(&store);
        let barrier = Arc::clone(&barrier);
        let latencies = Arc::clone(&latencies);
        let final_versions = Arc::clone(&final_versions);
        let duration = options.duration;
        let message_bytes = options.message_bytes;
        writer_threads.push(
            std::thread::Builder::new()
                .name(format!("bench-writer-{pair}"))
                .spawn(move || -> u64 {
                    let keys = KeyFields::new("bench", "config").resource(format!("p{pair:02}"));
                    barrier.wait();
                    let deadline = Instant::now() + duration;
                    let mut version = 0u64;
                    let mut local_latencies = Vec::new();
                    while Instant::now() < deadline {
                        version += 1;
                        let doc = pad_document_to(
                            Document::new(
                                json!({"bench": {"@id": format!("p{pair:02}"), "ver": version}}),
                            ),
                            message_bytes,
                        );
                        let began = Instant::now();
                        store.upsert_latest(doc, keys.clone());
                        local_latencies.push(began.elapsed().as_micros() as u64);
                    }
                    final_versions[pair].store(version, Ordering::SeqCst);
                    latencies.lock().unwrap().extend(local_latencies);
                    version
                })
                .expect("spawn writer"),
        );
    }

    let mut reader_threads = Vec::new();
    for pair in 0..pairs {
        let store = Arc::clone(&store);
        let barrier = Arc::clone(&barrier);
        let writers_done = Arc::clone(&writers_done);
        let final_versions = Arc::clone(&final_versions);
        reader_threads.push(
            std::thread::Builder::new()
                .name(format!("bench-reader-{pair}"))
                .spawn(move || -> u64 {
                    let filter = QueryFilter::new()
                        .source("bench")
                        .resource(format!("p{pair:02}"))
                        .latest_only()
                        .limit(1);
                    barrier.wait();
                    let mut selects = 0u64;
                    let mut last_version = 0u64;
                    loop {
                        if let Ok(records) = store.query(&filter) {
                            selects += 1;
                            if let Some(record) = records.first() {
                                let version = record
                                    .document
                                    .get_path(&["bench", "ver"])
                                    .and_then(|v| v.as_u64())
                                    .unwrap_or(0);
                                // versions never move backwards
                                assert!(version >= last_version, "lost update observed");
                                last_version = version;
                            }
                        }
                        if writers_done.load(Ordering::SeqCst) {
                            // confirm the final version is visible
                            let target = final_versions[pair].load(Ordering::SeqCst);
                            if last_version >= target {
                                break;
                            }
                        }
                    }
                    selects
                })
                .expect("spawn reader"),
        );
    }

    let started = Instant::now();
    barrier.wait();
    let mut sent_per_pair = Vec::with_capacity(pairs);
    for thread in writer_threads {
        sent_per_pair.push(thread.join().map_err(|_| ThroughputError::WorkerPanic)?);
    }
    writers_done.store(true, Ordering::SeqCst);
    let mut received_per_pair = Vec::with_capacity(pairs);
    for thread in reader_threads {
        received_per_pair.push(thread.join().map_err(|_| ThroughputError::WorkerPanic)?);
    }
    let elapsed = started.elapsed().as_secs_f64();

    let mut samples = std::mem::take(&mut *latencies.lock().unwrap());
    let mut report = assemble_report(
        "store",
        options,
        elapsed,
        &sent_per_pair,
        &received_per_pair,
        &mut samples,
    );
    // for the store the write stream is the throughput; conservation means
    // no reader ever saw a version move backwards and the final version of
    // every row is the writer's last
    report.conservation_ok = (0..pairs).all(|pair| {
        let filter = QueryFilter::new()
            .source("bench")
            .resource(format!("p{pair:02}"))
            .limit(1);
        store
            .query(&filter)
            .ok()
            .and_then(|records| {
                records
                    .first()
                    .and_then(|r| r.document.get_path(&["bench", "ver"]).and_then(|v| v.as_u64()))
            })
            .map(|v| v == final_versions[pair].load(Ordering::SeqCst))
            .unwrap_or(false)
    });
    report.msg_per_sec = if elapsed > 0.0 {
        report.sent as f64 / elapsed
    } else {
        0.0
    };
    report.mb_per_sec = report.msg_per_sec * options.message_bytes as f64 / 1_048_576.0;
    Ok(report)
}

fn assemble_report(
    backend: &str,
    options: &ThroughputOptions,
    elapsed_secs: f64,
    sent_per_pair: &[u64],
    received_per_pair: &[u64],
    latency_samples: &mut [u64],
) -> ThroughputReport {
    let sent: u64 = sent_per_pair.iter().sum();
    let received: u64 = received_per_pair.iter().sum();
    let per_pair: Vec<PairStats> = sent_per_pair
        .iter()
        .zip(received_per_pair)
        .enumerate()
        .map(|(pair, (&sent, &received))| PairStats {
            pair,
            sent,
            received,
        })
        .collect();
    let conservation_ok = per_pair.iter().all(|p| p.sent == p.received);
    let msg_per_sec = if elapsed_secs > 0.0 {
        received as f64 / elapsed_secs
    } else {
        0.0
    };
    ThroughputReport {
        backend: backend.to_string(),
        pairs: options.pairs,
        message_bytes: options.message_bytes,
        duration_secs: elapsed_secs,
        sent,
        received,
        msg_per_sec,
        mb_per_sec: msg_per_sec * options.message_bytes as f64 / 1_048_576.0,
        latency_ms_p50: percentile_ms(latency_samples, 0.50),
        latency_ms_p95: percentile_ms(latency_samples, 0.95),
        latency_ms_p99: percentile_ms(latency_samples, 0.99),
        per_pair,
        conservation_ok,
    }
}
