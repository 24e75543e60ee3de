//! Publishing abstraction so ETP adapters and workload generators can target
//! an embedded broker, a remote broker, or a plain collector interchangeably.

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::broker::client::BrokerClient;
use crate::broker::engine::Broker;
use crate::message::Message;

#[derive(Debug, Error)]
#[error("publish failed: {0}")]
pub struct PublishSinkError(pub String);

pub trait PublishSink: Send + Sync {
    fn publish(&self, message: Message) -> Result<(), PublishSinkError>;
}

/// Publishes into an in-process broker exchange.
pub struct ExchangePublisher {
    broker: Arc<Broker>,
    exchange: String,
}

impl ExchangePublisher {
    pub fn new(broker: Arc<Broker>, exchange: impl Into<String>) -> Self {
        ExchangePublisher {
            broker,
            exchange: exchange.into(),
        }
    }
}

impl PublishSink for ExchangePublisher {
    fn publish(&self, message: Message) -> Result<(), PublishSinkError> {
        self.broker
            .publish(&self.exchange, message)
            .map(|_| ())
            .map_err(|e| PublishSinkError(e.to_string()))
    }
}

/// Publishes to a broker over the wire.
pub struct RemotePublisher {
    client: Arc<BrokerClient>,
    exchange: String,
}

impl RemotePublisher {
    pub fn new(client: Arc<BrokerClient>, exchange: impl Into<String>) -> Self {
        RemotePublisher {
            client,
            exchange: exchange.into(),
        }
    }
}

impl PublishSink for RemotePublisher {
    fn publish(&self, message: Message) -> Result<(), PublishSinkError> {
        self.client
            .publish(&self.exchange, &message)
            .map_err(|e| PublishSinkError(e.to_string()))
    }
}

/// Collects published messages in memory; used by tests and dry runs.
#[derive(Default)]
pub struct CollectSink {
    messages: Mutex<Vec<Message>>,
}

impl CollectSink {
    pub fn new() -> Self {
        CollectSink::default()
    }

    pub fn drain(&self) -> Vec<Message> {
        std::mem::take(&mut *self.messages.lock().unwrap())
    }

    pub fn len(&self) -> usize {
        self.messages.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PublishSink for CollectSink {
    fn publish(&self, message: Message) -> Result<(), PublishSinkError> {
        self.messages.lock().unwrap().push(message);
        Ok(())
    }
}
