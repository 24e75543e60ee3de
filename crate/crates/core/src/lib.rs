//! Federated monitoring information system building blocks.
//!
//! Heterogeneous monitoring sources are transformed into a common JSON
//! representation (`xform`), distributed by a topic-routing publish/subscribe
//! broker (`broker`), cached in a searchable hybrid document store (`store`),
//! and exercised by a workload emulator and throughput harness (`workload`).

pub mod broker;
pub mod store;
pub mod workload;
pub mod xform;
pub mod document;
pub mod hash;
pub mod message;
pub mod routing;
pub mod timeutil;

pub use document::{Document, DocumentError};
pub use message::Message;
pub use routing::{PatternElement, RoutingKey, RoutingPattern};
