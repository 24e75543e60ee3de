//! Shared helpers for the criterion benchmarks.

use fedmon_core::{Document, Message, RoutingKey};

pub fn sample_message(key: &str, payload_bytes: usize) -> Message {
    let doc = fedmon_core::workload::generate::pad_document_to(
        Document::new(serde_json::json!({"bench": {"@id": "b"}})),
        payload_bytes,
    );
    Message::new(RoutingKey::parse(key).unwrap(), &doc)
}
