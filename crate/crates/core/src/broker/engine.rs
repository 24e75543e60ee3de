use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::Message;
use crate::routing::{KeyParseError, PatternParseError, RoutingPattern};

/// Default per-queue buffer capacity. Overflow drops the arriving message
/// for that queue and counts it.
pub const DEFAULT_QUEUE_CAPACITY: usize = 100_000;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("exchange name must not be empty")]
    EmptyExchangeName,
    #[error("queue name must not be empty")]
    EmptyQueueName,
    #[error("unknown exchange {0:?}")]
    UnknownExchange(String),
    #[error("unknown queue {0:?}")]
    UnknownQueue(String),
    #[error("unknown delivery tag {tag} for queue {queue:?}")]
    UnknownDeliveryTag { queue: String, tag: u64 },
    #[error(transparent)]
    BadRoutingKey(#[from] KeyParseError),
    #[error(transparent)]
    BadPattern(#[from] PatternParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckMode {
    /// Message is considered acknowledged the moment it is handed out.
    Auto,
    /// Message stays unacknowledged until `ack(tag)`; unacked messages are
    /// requeued when the consumer goes away. The default, matching stock
    /// client behavior.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub queue_capacity: usize,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

#[derive(Debug, Default)]
struct GlobalCounters {
    published_count: AtomicU64,
    published_bytes: AtomicU64,
    delivered_count: AtomicU64,
    delivered_bytes: AtomicU64,
    acked_count: AtomicU64,
    dropped_count: AtomicU64,
}

#[derive(Debug, Default)]
struct ExchangeCounters {
    published_count: AtomicU64,
    published_bytes: AtomicU64,
}

struct Exchange {
    bindings: RwLock<Vec<(RoutingPattern, String)>>,
    counters: ExchangeCounters,
}

#[derive(Debug, Default)]
struct QueueCounters {
    delivered_count: AtomicU64,
    delivered_bytes: AtomicU64,
    acked_count: AtomicU64,
    dropped_count: AtomicU64,
}

struct QueueInner {
    buffer: VecDeque<Arc<Message>>,
    unacked: HashMap<u64, Arc<Message>>,
    next_tag: u64,
}

struct QueueState {
    name: String,
    capacity: usize,
    inner: Mutex<QueueInner>,
    available: Condvar,
    counters: QueueCounters,
}

impl QueueState {
    fn new(name: String, capacity: usize) -> Self {
        QueueState {
            name,
            capacity,
            inner: Mutex::new(QueueInner {
                buffer: VecDeque::new(),
                unacked: HashMap::new(),
                next_tag: 1,
            }),
            available: Condvar::new(),
            counters: QueueCounters::default(),
        }
    }
}

/// Point-in-time statistics snapshot, also served over the wire as JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BrokerStatsSnapshot {
    pub published_count: u64,
    pub published_bytes: u64,
    pub delivered_count: u64,
    pub delivered_bytes: u64,
    pub acked_count: u64,
    pub dropped_count: u64,
    pub exchanges: BTreeMap<String, ExchangeStatsSnapshot>,
    pub queues: BTreeMap<String, QueueStatsSnapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExchangeStatsSnapshot {
    pub published_count: u64,
    pub published_bytes: u64,
    pub bindings: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueueStatsSnapshot {
    pub delivered_count: u64,
    pub delivered_bytes: u64,
    pub acked_count: u64,
    pub dropped_count: u64,
    pub depth: u64,
    pub unacked: u64,
}

/// The in-process broker. Safe to share across threads; per-queue operations
/// serialize on the queue's own lock while distinct queues proceed in parallel.
pub struct Broker {
    config: BrokerConfig,
    exchanges: RwLock<HashMap<String, Arc<Exchange>>>,
    queues: RwLock<HashMap<String, Arc<QueueState>>>,
    counters: GlobalCounters,
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        Broker {
            config,
            exchanges: RwLock::new(HashMap::new()),
            queues: RwLock::new(HashMap::new()),
            counters: GlobalCounters::default(),
        }
    }

    pub fn with_defaults() -> Self {
        Broker::new(BrokerConfig::default())
    }

    /// Declares an exchange. Idempotent: re-declaring returns the existing one.
    pub fn declare_exchange(&self, name: &str) -> Result<(), BrokerError> {
        if name.is_empty() {
            return Err(BrokerError::EmptyExchangeName);
        }
        let mut exchanges = self.exchanges.write().unwrap();
        exchanges.entry(name.to_string()).or_insert_with(|| {
            Arc::new(Exchange {
                bindings: RwLock::new(Vec::new()),
                counters: ExchangeCounters::default(),
            })
        });
        Ok(())
    }

    /// Binds a queue to an exchange under a pattern, creating the queue if
    /// needed. Duplicate (pattern, queue) bindings are ignored.
    pub fn bind(&self, queue: &str, exchange: &str, pattern: &RoutingPattern) -> Result<(), BrokerError> {
        if queue.is_empty() {
            return Err(BrokerError::EmptyQueueName);
        }
        let exchange = self.lookup_exchange(exchange)?;
        self.ensure_queue(queue);
        let mut bindings = exchange.bindings.write().unwrap();
        let exists = bindings
            .iter()
            .any(|(p, q)| p == pattern && q == queue);
        if !exists {
            bindings.push((pattern.clone(), queue.to_string()));
        }
        Ok(())
    }

    /// Publishes a message: one enqueue per queue with at least one matching
    /// binding. Returns the number of queues reached. A queue at capacity
    /// drops the message (counted) without failing the publish.
    pub fn publish(&self, exchange: &str, message: Message) -> Result<usize, BrokerError> {
        let exchange_state = self.lookup_exchange(exchange)?;
        let payload_size = message.payload_size();

        self.counters.published_count.fetch_add(1, Ordering::Relaxed);
        self.counters
            .published_bytes
            .fetch_add(payload_size, Ordering::Relaxed);
        exchange_state
            .counters
            .published_count
            .fetch_add(1, Ordering::Relaxed);
        exchange_state
            .counters
            .published_bytes
            .fetch_add(payload_size, Ordering::Relaxed);

        // exactly-once per queue no matter how many of its bindings match
        let mut targets: Vec<String> = Vec::new();
        {
            let bindings = exchange_state.bindings.read().unwrap();
            for (pattern, queue) in bindings.iter() {
                if !targets.iter().any(|t| t == queue) && pattern.matches(message.routing_key()) {
                    targets.push(queue.clone());
                }
            }
        }
        if targets.is_empty() {
            return Ok(0);
        }

        let message = Arc::new(message);
        let mut reached = 0;
        for target in &targets {
            let queue = {
                let queues = self.queues.read().unwrap();
                match queues.get(target) {
                    Some(q) => Arc::clone(q),
                    None => continue, // binding to a deleted queue: skip
                }
            };
            let mut inner = queue.inner.lock().unwrap();
            if inner.buffer.len() >= queue.capacity {
                drop(inner);
                queue.counters.dropped_count.fetch_add(1, Ordering::Relaxed);
                self.counters.dropped_count.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            inner.buffer.push_back(Arc::clone(&message));
            // counted under the queue lock so delivered >= acked in any snapshot
            queue.counters.delivered_count.fetch_add(1, Ordering::Relaxed);
            queue
                .counters
                .delivered_bytes
                .fetch_add(payload_size, Ordering::Relaxed);
            self.counters.delivered_count.fetch_add(1, Ordering::Relaxed);
            self.counters
                .delivered_bytes
                .fetch_add(payload_size, Ordering::Relaxed);
            drop(inner);
            queue.available.notify_one();
            reached += 1;
        }
        Ok(reached)
    }

    /// Starts consuming a queue. Messages are yielded in FIFO order; two
    /// consumers on one queue share the work (each message goes to exactly
    /// one of them).
    pub fn consume(self: &Arc<Self>, queue: &str, mode: AckMode) -> Result<Consumer, BrokerError> {
        let queues = self.queues.read().unwrap();
        let state = queues
            .get(queue)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownQueue(queue.to_string()))?;
        drop(queues);
        Ok(Consumer {
            broker: Arc::clone(self),
            queue: state,
            mode,
            outstanding: BTreeSet::new(),
        })
    }

    /// Acknowledges deliveries by queue name, without a consumer handle.
    /// The wire front-end applies client acks this way. Fails on the first
    /// unknown tag, after applying the tags before it.
    pub fn ack_queue(&self, queue: &str, tags: &[u64]) -> Result<(), BrokerError> {
        let state = {
            let queues = self.queues.read().unwrap();
            queues
                .get(queue)
                .cloned()
                .ok_or_else(|| BrokerError::UnknownQueue(queue.to_string()))?
        };
        let mut inner = state.inner.lock().unwrap();
        let mut acked = 0u64;
        let mut failed = None;
        for tag in tags {
            if inner.unacked.remove(tag).is_some() {
                acked += 1;
            } else {
                failed = Some(*tag);
                break;
            }
        }
        drop(inner);
        if acked > 0 {
            state.counters.acked_count.fetch_add(acked, Ordering::Relaxed);
            self.counters.acked_count.fetch_add(acked, Ordering::Relaxed);
        }
        match failed {
            None => Ok(()),
            Some(tag) => Err(BrokerError::UnknownDeliveryTag {
                queue: queue.to_string(),
                tag,
            }),
        }
    }

    pub fn queue_depth(&self, queue: &str) -> Result<usize, BrokerError> {
        let queues = self.queues.read().unwrap();
        let state = queues
            .get(queue)
            .ok_or_else(|| BrokerError::UnknownQueue(queue.to_string()))?;
        let inner = state.inner.lock().unwrap();
        Ok(inner.buffer.len())
    }

    /// Consistent-enough snapshot of all counters.
    pub fn stats(&self) -> BrokerStatsSnapshot {
        let mut exchanges = BTreeMap::new();
        for (name, exchange) in self.exchanges.read().unwrap().iter() {
            exchanges.insert(
                name.clone(),
                ExchangeStatsSnapshot {
                    published_count: exchange.counters.published_count.load(Ordering::Relaxed),
                    published_bytes: exchange.counters.published_bytes.load(Ordering::Relaxed),
                    bindings: exchange.bindings.read().unwrap().len() as u64,
                },
            );
        }
        let mut queues = BTreeMap::new();
        for (name, queue) in self.queues.read().unwrap().iter() {
            let inner = queue.inner.lock().unwrap();
            queues.insert(
                name.clone(),
                QueueStatsSnapshot {
                    delivered_count: queue.counters.delivered_count.load(Ordering::Relaxed),
                    delivered_bytes: queue.counters.delivered_bytes.load(Ordering::Relaxed),
                    acked_count: queue.counters.acked_count.load(Ordering::Relaxed),
                    dropped_count: queue.counters.dropped_count.load(Ordering::Relaxed),
                    depth: inner.buffer.len() as u64,
                    unacked: inner.unacked.len() as u64,
                },
            );
        }
        BrokerStatsSnapshot {
            published_count: self.counters.published_count.load(Ordering::Relaxed),
            published_bytes: self.counters.published_bytes.load(Ordering::Relaxed),
            delivered_count: self.counters.delivered_count.load(Ordering::Relaxed),
            delivered_bytes: self.counters.delivered_bytes.load(Ordering::Relaxed),
            acked_count: self.counters.acked_count.load(Ordering::Relaxed),
            dropped_count: self.counters.dropped_count.load(Ordering::Relaxed),
            exchanges,
            queues,
        }
    }

    pub fn exchange_names(&self) -> Vec<String> {
        self.exchanges.read().unwrap().keys().cloned().collect()
    }

    fn lookup_exchange(&self, name: &str) -> Result<Arc<Exchange>, BrokerError> {
        let exchanges = self.exchanges.read().unwrap();
        exchanges
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownExchange(name.to_string()))
    }

    fn ensure_queue(&self, name: &str) {
        let mut queues = self.queues.write().unwrap();
        queues
            .entry(name.to_string())
            .or_insert_with(|| Arc::new(QueueState::new(name.to_string(), self.config.queue_capacity)));
    }
}

/// One message handed to a consumer.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub tag: u64,
    pub message: Arc<Message>,
}

/// A consumer attached to one queue. Dropping a consumer requeues its
/// unacknowledged deliveries at the front of the queue (at-least-once).
pub struct Consumer {
    broker: Arc<Broker>,
    queue: Arc<QueueState>,
    mode: AckMode,
    outstanding: BTreeSet<u64>,
}

impl Consumer {
    pub fn queue_name(&self) -> &str {
        &self.queue.name
    }

    /// Pops the next message, waiting up to `timeout`.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Option<Delivery> {
        let deadline = std::time::Instant::now() + timeout;
        let queue = Arc::clone(&self.queue);
        let mut inner = queue.inner.lock().unwrap();
        loop {
            if let Some(message) = inner.buffer.pop_front() {
                return Some(self.hand_out(&mut inner, message));
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return None;
            }
            let (guard, result) = queue.available.wait_timeout(inner, deadline - now).unwrap();
            inner = guard;
            if result.timed_out() && inner.buffer.is_empty() {
                return None;
            }
        }
    }

    /// Pops the next message if one is immediately available.
    pub fn try_recv(&mut self) -> Option<Delivery> {
        let queue = Arc::clone(&self.queue);
        let mut inner = queue.inner.lock().unwrap();
        let message = inner.buffer.pop_front()?;
        Some(self.hand_out(&mut inner, message))
    }

    fn hand_out(&mut self, inner: &mut QueueInner, message: Arc<Message>) -> Delivery {
        let tag = inner.next_tag;
        inner.next_tag += 1;
        match self.mode {
            AckMode::Auto => {
                self.queue.counters.acked_count.fetch_add(1, Ordering::Relaxed);
                self.broker
                    .counters
                    .acked_count
                    .fetch_add(1, Ordering::Relaxed);
            }
            AckMode::Explicit => {
                inner.unacked.insert(tag, Arc::clone(&message));
                self.outstanding.insert(tag);
                // acks may be applied directly on the queue (the wire path),
                // so the local set is a superset; prune it now and then
                if self.outstanding.len() >= 4096 {
                    self.outstanding.retain(|t| inner.unacked.contains_key(t));
                }
            }
        }
        Delivery { tag, message }
    }

    /// Acknowledges an explicit-mode delivery.
    pub fn ack(&mut self, tag: u64) -> Result<(), BrokerError> {
        self.ack_many(std::slice::from_ref(&tag))
    }

    /// Acknowledges a batch under one queue lock. Fails on the first
    /// unknown tag, after applying the tags before it.
    pub fn ack_many(&mut self, tags: &[u64]) -> Result<(), BrokerError> {
        let queue = Arc::clone(&self.queue);
        let mut inner = queue.inner.lock().unwrap();
        let mut acked = 0u64;
        let mut failed = None;
        for tag in tags {
            match inner.unacked.remove(tag) {
                Some(_) => {
                    self.outstanding.remove(tag);
                    acked += 1;
                }
                None => {
                    failed = Some(*tag);
                    break;
                }
            }
        }
        if acked > 0 {
            self.queue.counters.acked_count.fetch_add(acked, Ordering::Relaxed);
            self.broker.counters.acked_count.fetch_add(acked, Ordering::Relaxed);
        }
        match failed {
            None => Ok(()),
            Some(tag) => Err(BrokerError::UnknownDeliveryTag {
                queue: self.queue.name.clone(),
                tag,
            }),
        }
    }
}

impl Drop for Consumer {
    fn drop(&mut self) {
        if self.outstanding.is_empty() {
            return;
        }
        let mut inner = self.queue.inner.lock().unwrap();
        // descending tag order so push_front restores original FIFO order
        for tag in self.outstanding.iter().rev() {
            if let Some(message) = inner.unacked.remove(tag) {
                inner.buffer.push_front(message);
            }
        }
        drop(inner);
        self.queue.available.notify_all();
    }
}
