//! TCP front-end for the broker.
//!
//! One reader thread per connection; each SUBSCRIBE spawns a pump that moves
//! deliveries from the queue straight onto the connection's shared buffered
//! writer, flushing once per burst. Semantic errors are reported as ERROR
//! frames; protocol errors close the connection.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::broker::engine::{AckMode, Broker, BrokerError, Consumer, Delivery};
use crate::broker::wire::{
    self, Frame, FrameError, SubscribeMode, ERR_BAD_ROUTING, ERR_PROTOCOL, ERR_UNKNOWN_EXCHANGE,
    ERR_UNKNOWN_QUEUE, ERR_UNKNOWN_TAG,
};
use crate::message::Message;
use crate::routing::RoutingKey;

/// Default listen port.
pub const DEFAULT_PORT: u16 = 5680;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub max_frame: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_frame: wire::MAX_FRAME_SIZE,
        }
    }
}

/// A running broker server. Stop it with [`ServerHandle::stop`]; open
/// connections are serviced until their clients disconnect.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds and serves a broker on `addr`, returning once the listener is live.
pub fn serve<A: ToSocketAddrs>(
    broker: Arc<Broker>,
    addr: A,
    config: ServerConfig,
) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept_stop = Arc::clone(&stop);
    let accept_thread = std::thread::Builder::new()
        .name("broker-accept".into())
        .spawn(move || accept_loop(listener, broker, config, accept_stop))
        .expect("spawn accept thread");
    Ok(ServerHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn accept_loop(
    listener: TcpListener,
    broker: Arc<Broker>,
    config: ServerConfig,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _peer)) => {
                let broker = Arc::clone(&broker);
                let config = config.clone();
                std::thread::Builder::new()
                    .name("broker-conn".into())
                    .spawn(move || handle_connection(stream, broker, config))
                    .expect("spawn connection thread");
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => break,
        }
    }
}

/// The connection's write half. Pumps and the reader share it; whoever
/// writes takes the lock, writes a burst, and flushes before releasing.
struct ConnWriter {
    inner: Mutex<BufWriter<TcpStream>>,
}

impl ConnWriter {
    fn send_frame(&self, frame: &Frame) -> Result<(), FrameError> {
        let mut writer = self.inner.lock().unwrap();
        wire::write_frame(&mut *writer, frame)?;
        writer.flush()?;
        Ok(())
    }
}

struct SubscriptionPump {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

fn handle_connection(stream: TcpStream, broker: Arc<Broker>, config: ServerConfig) {
    stream.set_nodelay(true).ok();
    let reader_stream = match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    };
    let writer = Arc::new(ConnWriter {
        inner: Mutex::new(BufWriter::with_capacity(128 * 1024, stream)),
    });

    let mut pumps: HashMap<String, SubscriptionPump> = HashMap::new();
    let mut reader = BufReader::with_capacity(128 * 1024, reader_stream);

    loop {
        let frame = match wire::read_frame(&mut reader, config.max_frame) {
            Ok(frame) => frame,
            Err(FrameError::ConnectionClosed) => break,
            Err(err) => {
                // protocol error: report best-effort, then close
                let _ = writer.send_frame(&Frame::Error {
                    code: ERR_PROTOCOL,
                    message: err.to_string(),
                });
                break;
            }
        };
        match frame {
            Frame::Declare { exchange } => {
                if let Err(err) = broker.declare_exchange(&exchange) {
                    send_error(&writer, &err);
                }
            }
            Frame::Bind {
                exchange,
                queue,
                pattern,
            } => {
                let outcome = pattern
                    .parse()
                    .map_err(BrokerError::BadPattern)
                    .and_then(|p| broker.bind(&queue, &exchange, &p));
                if let Err(err) = outcome {
                    send_error(&writer, &err);
                }
            }
            Frame::Publish {
                exchange,
                routing_key,
                published_at_micros,
                payload,
            } => {
                let outcome = RoutingKey::parse(&routing_key)
                    .map_err(BrokerError::BadRoutingKey)
                    .and_then(|key| {
                        broker.publish(&exchange, Message::from_raw(key, payload, published_at_micros))
                    });
                if let Err(err) = outcome {
                    send_error(&writer, &err);
                }
            }
            Frame::Subscribe { queue, mode } => {
                let ack_mode = match mode {
                    SubscribeMode::Auto => AckMode::Auto,
                    SubscribeMode::Explicit => AckMode::Explicit,
                };
                match broker.consume(&queue, ack_mode) {
                    Ok(consumer) => {
                        let pump = spawn_pump(consumer, Arc::clone(&writer));
                        if let Some(old) = pumps.insert(queue, pump) {
                            stop_pump(old);
                        }
                    }
                    Err(err) => send_error(&writer, &err),
                }
            }
            Frame::Ack {
                queue,
                delivery_tag,
            } => {
                // applied right here; no consumer handle involved
                if let Err(err) = broker.ack_queue(&queue, &[delivery_tag]) {
                    send_error(&writer, &err);
                }
            }
            Frame::StatsReq => {
                let stats = broker.stats();
                let stats_json = serde_json::to_vec(&stats).expect("stats serialize");
                let _ = writer.send_frame(&Frame::StatsResp { stats_json });
            }
            // server-to-client frames arriving here are protocol violations
            Frame::Deliver { .. } | Frame::StatsResp { .. } | Frame::Error { .. } => {
                let _ = writer.send_frame(&Frame::Error {
                    code: ERR_PROTOCOL,
                    message: "unexpected frame direction".into(),
                });
                break;
            }
        }
    }

    for (_, pump) in pumps.drain() {
        stop_pump(pump);
    }
}

fn send_error(writer: &ConnWriter, err: &BrokerError) {
    let code = match err {
        BrokerError::UnknownExchange(_) | BrokerError::EmptyExchangeName => ERR_UNKNOWN_EXCHANGE,
        BrokerError::UnknownQueue(_) | BrokerError::EmptyQueueName => ERR_UNKNOWN_QUEUE,
        BrokerError::UnknownDeliveryTag { .. } => ERR_UNKNOWN_TAG,
        BrokerError::BadRoutingKey(_) | BrokerError::BadPattern(_) => ERR_BAD_ROUTING,
    };
    let _ = writer.send_frame(&Frame::Error {
        code,
        message: err.to_string(),
    });
}

fn spawn_pump(consumer: Consumer, writer: Arc<ConnWriter>) -> SubscriptionPump {
    let stop = Arc::new(AtomicBool::new(false));
    let pump_stop = Arc::clone(&stop);
    let thread = std::thread::Builder::new()
        .name("broker-pump".into())
        .spawn(move || pump_loop(consumer, writer, pump_stop))
        .expect("spawn pump thread");
    SubscriptionPump {
        stop,
        thread: Some(thread),
    }
}

fn stop_pump(mut pump: SubscriptionPump) {
    pump.stop.store(true, Ordering::SeqCst);
    if let Some(thread) = pump.thread.take() {
        let _ = thread.join();
    }
}

fn pump_loop(mut consumer: Consumer, writer: Arc<ConnWriter>, stop: Arc<AtomicBool>) {
    const BURST: usize = 256;
    let queue = consumer.queue_name().to_string();
    let mut burst: Vec<Delivery> = Vec::with_capacity(BURST);
    while !stop.load(Ordering::SeqCst) {
        match consumer.recv_timeout(Duration::from_millis(50)) {
            Some(delivery) => {
                burst.push(delivery);
                while burst.len() < BURST {
                    match consumer.try_recv() {
                        Some(delivery) => burst.push(delivery),
                        None => break,
                    }
                }
                // one lock and one flush per burst
                let outcome = {
                    let mut out = writer.inner.lock().unwrap();
                    let mut result = Ok(());
                    for delivery in &burst {
                        result = wire::write_deliver_frame(
                            &mut *out,
                            &queue,
                            delivery.tag,
                            &delivery.message.routing_key().to_string(),
                            delivery.message.published_at_micros(),
                            delivery.message.payload_bytes(),
                        )
                        .map_err(|_| ());
                        if result.is_err() {
                            break;
                        }
                    }
                    result.and_then(|_| out.flush().map_err(|_| ()))
                };
                burst.clear();
                if outcome.is_err() {
                    break; // connection gone; Drop requeues unacked
                }
            }
            None => continue,
        }
    }
}
