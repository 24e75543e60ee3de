//! Blocking TCP client for the broker wire protocol.
//!
//! A client owns one connection. Publishes and acks are buffered writes
//! (flushed per call unless `set_auto_flush(false)`), deliveries arrive on
//! per-queue channels fed by a background reader thread.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use thiserror::Error;

use crate::broker::engine::BrokerStatsSnapshot;
use crate::broker::wire::{self, Frame, FrameError, SubscribeMode};
use crate::message::Message;
use crate::routing::{KeyParseError, RoutingKey, RoutingPattern};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    BadRoutingKey(#[from] KeyParseError),
    #[error("broker error {code}: {message}")]
    Broker { code: u8, message: String },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("connection closed")]
    Closed,
}

type InlineHandler = Box<dyn FnMut(WireDelivery) + Send>;

enum Dispatch {
    Channel(Sender<WireDelivery>),
    /// Runs on the reader thread itself; for hot consumers that do trivial
    /// per-message work and want no extra thread hop.
    Inline(InlineHandler),
}

struct Shared {
    subscriptions: Mutex<HashMap<String, Dispatch>>,
    stats_waiters: Mutex<Vec<Sender<BrokerStatsSnapshot>>>,
    last_error: Mutex<Option<(u8, String)>>,
}

/// One delivery received over the wire.
#[derive(Debug, Clone)]
pub struct WireDelivery {
    pub delivery_tag: u64,
    pub message: Message,
}

pub struct BrokerClient {
    writer: Arc<Mutex<BufWriter<TcpStream>>>,
    shared: Arc<Shared>,
    auto_flush: std::sync::atomic::AtomicBool,
    reader_thread: Option<JoinHandle<()>>,
}

/// A detachable handle for acknowledging deliveries of one queue. Shares the
/// client's write half without owning the client, so inline delivery
/// handlers can ack from the reader thread.
pub struct AckSender {
    writer: Arc<Mutex<BufWriter<TcpStream>>>,
    queue: String,
}

impl AckSender {
    pub fn ack(&self, delivery_tag: u64) -> Result<(), ClientError> {
        let mut writer = self.writer.lock().unwrap();
        wire::write_frame(
            &mut *writer,
            &Frame::Ack {
                queue: self.queue.clone(),
                delivery_tag,
            },
        )?;
        Ok(())
    }

    pub fn flush(&self) -> Result<(), ClientError> {
        self.writer.lock().unwrap().flush()?;
        Ok(())
    }
}

impl BrokerClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ClientError> {
        Self::connect_with_max_frame(addr, wire::MAX_FRAME_SIZE)
    }

    pub fn connect_with_max_frame<A: ToSocketAddrs>(
        addr: A,
        max_frame: u32,
    ) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true).ok();
        let reader_stream = stream.try_clone()?;
        let shared = Arc::new(Shared {
            subscriptions: Mutex::new(HashMap::new()),
            stats_waiters: Mutex::new(Vec::new()),
            last_error: Mutex::new(None),
        });
        let reader_shared = Arc::clone(&shared);
        let reader_thread = std::thread::Builder::new()
            .name("broker-client-reader".into())
            .spawn(move || reader_loop(reader_stream, reader_shared, max_frame))
            .expect("spawn client reader");
        Ok(BrokerClient {
            writer: Arc::new(Mutex::new(BufWriter::with_capacity(64 * 1024, stream))),
            shared,
            auto_flush: std::sync::atomic::AtomicBool::new(true),
            reader_thread: Some(reader_thread),
        })
    }

    /// When disabled, callers batch writes and call [`BrokerClient::flush`].
    pub fn set_auto_flush(&self, enabled: bool) {
        self.auto_flush
            .store(enabled, std::sync::atomic::Ordering::Relaxed);
    }

    fn send(&self, frame: &Frame) -> Result<(), ClientError> {
        let mut writer = self.writer.lock().unwrap();
        wire::write_frame(&mut *writer, frame)?;
        if self.auto_flush.load(std::sync::atomic::Ordering::Relaxed) {
            writer.flush()?;
        }
        Ok(())
    }

    pub fn flush(&self) -> Result<(), ClientError> {
        self.writer.lock().unwrap().flush()?;
        Ok(())
    }

    pub fn declare_exchange(&self, exchange: &str) -> Result<(), ClientError> {
        self.send(&Frame::Declare {
            exchange: exchange.to_string(),
        })
    }

    pub fn bind(&self, queue: &str, exchange: &str, pattern: &RoutingPattern) -> Result<(), ClientError> {
        self.send(&Frame::Bind {
            exchange: exchange.to_string(),
            queue: queue.to_string(),
            pattern: pattern.to_string(),
        })
    }

    /// Fire-and-forget publish. Broker-side failures surface asynchronously
    /// via [`BrokerClient::take_error`]. Writes the frame directly from the
    /// message's parts; nothing is copied on the way out.
    pub fn publish(&self, exchange: &str, message: &Message) -> Result<(), ClientError> {
        let routing_key = message.routing_key().to_string();
        let mut writer = self.writer.lock().unwrap();
        wire::write_publish_frame(
            &mut *writer,
            exchange,
            &routing_key,
            message.published_at_micros(),
            message.payload_bytes(),
        )?;
        if self.auto_flush.load(std::sync::atomic::Ordering::Relaxed) {
            writer.flush()?;
        }
        Ok(())
    }

    /// Subscribes to a queue; deliveries arrive on the returned consumer.
    pub fn subscribe(&self, queue: &str, mode: SubscribeMode) -> Result<WireConsumer, ClientError> {
        let (tx, rx) = bounded::<WireDelivery>(8192);
        self.shared
            .subscriptions
            .lock()
            .unwrap()
            .insert(queue.to_string(), Dispatch::Channel(tx));
        self.send(&Frame::Subscribe {
            queue: queue.to_string(),
            mode,
        })?;
        Ok(WireConsumer {
            queue: queue.to_string(),
            deliveries: rx,
        })
    }

    /// Subscribes with an inline handler invoked on the reader thread. The
    /// handler must be quick; anything slow belongs on [`BrokerClient::subscribe`].
    pub fn subscribe_inline(
        &self,
        queue: &str,
        mode: SubscribeMode,
        handler: impl FnMut(WireDelivery) + Send + 'static,
    ) -> Result<(), ClientError> {
        self.shared
            .subscriptions
            .lock()
            .unwrap()
            .insert(queue.to_string(), Dispatch::Inline(Box::new(handler)));
        self.send(&Frame::Subscribe {
            queue: queue.to_string(),
            mode,
        })
    }

    pub fn ack(&self, queue: &str, delivery_tag: u64) -> Result<(), ClientError> {
        self.send(&Frame::Ack {
            queue: queue.to_string(),
            delivery_tag,
        })
    }

    /// Detaches an ack handle for a queue; see [`AckSender`].
    pub fn ack_sender(&self, queue: &str) -> AckSender {
        AckSender {
            writer: Arc::clone(&self.writer),
            queue: queue.to_string(),
        }
    }

    /// Requests a statistics snapshot and waits for the response.
    pub fn stats(&self, timeout: Duration) -> Result<BrokerStatsSnapshot, ClientError> {
        let (tx, rx) = unbounded();
        self.shared.stats_waiters.lock().unwrap().push(tx);
        self.send(&Frame::StatsReq)?;
        self.flush()?;
        rx.recv_timeout(timeout)
            .map_err(|_| ClientError::Timeout("stats response"))
    }

    /// Most recent asynchronous broker error, if any.
    pub fn take_error(&self) -> Option<(u8, String)> {
        self.shared.last_error.lock().unwrap().take()
    }
}

impl Drop for BrokerClient {
    fn drop(&mut self) {
        // closing the write half unblocks the reader thread via EOF
        if let Ok(writer) = self.writer.lock() {
            let _ = writer.get_ref().shutdown(std::net::Shutdown::Both);
        }
        if let Some(thread) = self.reader_thread.take() {
            let _ = thread.join();
        }
    }
}

/// Per-queue stream of wire deliveries.
pub struct WireConsumer {
    queue: String,
    deliveries: Receiver<WireDelivery>,
}

impl WireConsumer {
    pub fn queue_name(&self) -> &str {
        &self.queue
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<WireDelivery> {
        self.deliveries.recv_timeout(timeout).ok()
    }

    pub fn try_recv(&self) -> Option<WireDelivery> {
        self.deliveries.try_recv().ok()
    }
}

fn reader_loop(stream: TcpStream, shared: Arc<Shared>, max_frame: u32) {
    let mut reader = BufReader::with_capacity(64 * 1024, stream);
    loop {
        match wire::read_frame(&mut reader, max_frame) {
            Ok(Frame::Deliver {
                queue,
                delivery_tag,
                routing_key,
                published_at_micros,
                payload,
            }) => {
                let key = match RoutingKey::parse(&routing_key) {
                    Ok(key) => key,
                    Err(_) => continue, // corrupt delivery; skip
                };
                let delivery = WireDelivery {
                    delivery_tag,
                    message: Message::from_raw(key, payload, published_at_micros),
                };
                let mut subs = shared.subscriptions.lock().unwrap();
                match subs.get_mut(&queue) {
                    Some(Dispatch::Channel(tx)) => {
                        // block here for backpressure; drop only if consumer gone
                        let tx = tx.clone();
                        drop(subs);
                        let _ = tx.send(delivery);
                    }
                    Some(Dispatch::Inline(handler)) => handler(delivery),
                    None => {}
                }
            }
            Ok(Frame::StatsResp { stats_json }) => {
                if let Ok(stats) = serde_json::from_slice::<BrokerStatsSnapshot>(&stats_json) {
                    let mut waiters = shared.stats_waiters.lock().unwrap();
                    if !waiters.is_empty() {
                        let tx = waiters.remove(0);
                        let _ = tx.send(stats);
                    }
                }
            }
            Ok(Frame::Error { code, message }) => {
                *shared.last_error.lock().unwrap() = Some((code, message));
            }
            Ok(_) => {
                // client-to-server frame from the server: ignore
            }
            Err(_) => return,
        }
    }
}
