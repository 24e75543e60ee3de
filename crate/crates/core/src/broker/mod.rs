//! Topic-exchange publish/subscribe broker.
//!
//! Producers publish tagged messages to named exchanges; bindings route each
//! message to every queue with at least one matching topic pattern; consumers
//! drain queues in FIFO order with explicit or automatic acknowledgment.
//! The broker can be embedded in-process or served over TCP (see [`server`]
//! and [`client`]).

mod engine;
pub mod wire;
pub mod server;
pub mod client;
pub mod sink;

pub use engine::{
    AckMode, Broker, BrokerConfig, BrokerError, BrokerStatsSnapshot, Consumer, Delivery,
    ExchangeStatsSnapshot, QueueStatsSnapshot, DEFAULT_QUEUE_CAPACITY,
};
pub use sink::{CollectSink, ExchangePublisher, PublishSink, PublishSinkError, RemotePublisher};
