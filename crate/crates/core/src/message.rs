//! The unit of distribution: a routed JSON payload with a publish timestamp.

use std::sync::Arc;

use crate::document::{Document, DocumentError};
use crate::routing::RoutingKey;
use crate::timeutil;

/// A published message. The payload is held as canonical JSON bytes so the
/// broker can route and copy it without re-parsing; `document()` parses on
/// demand for consumers that need the tree.
#[derive(Debug, Clone)]
pub struct Message {
    routing_key: RoutingKey,
    payload: Arc<[u8]>,
    published_at_micros: u64,
}

impl Message {
    /// Builds a message from a document, stamping it with the current time.
    pub fn new(routing_key: RoutingKey, payload: &Document) -> Self {
        Self::with_timestamp(routing_key, payload, timeutil::now_micros())
    }

    pub fn with_timestamp(routing_key: RoutingKey, payload: &Document, published_at_micros: u64) -> Self {
        Message {
            routing_key,
            payload: payload.canonical_bytes().into(),
            published_at_micros,
        }
    }

    /// Rebuilds a message from wire parts. The bytes are trusted to be
    /// canonical JSON; consumers that parse them will surface corruption.
    pub fn from_raw(routing_key: RoutingKey, payload: Vec<u8>, published_at_micros: u64) -> Self {
        Message {
            routing_key,
            payload: payload.into(),
            published_at_micros,
        }
    }

    pub fn routing_key(&self) -> &RoutingKey {
        &self.routing_key
    }

    pub fn payload_bytes(&self) -> &[u8] {
        &self.payload
    }

    /// Byte length of the canonical payload serialization.
    pub fn payload_size(&self) -> u64 {
        self.payload.len() as u64
    }

    pub fn published_at_micros(&self) -> u64 {
        self.published_at_micros
    }

    /// Parses the payload back into a document tree.
    pub fn document(&self) -> Result<Document, DocumentError> {
        Document::parse_bytes(&self.payload)
    }
}
