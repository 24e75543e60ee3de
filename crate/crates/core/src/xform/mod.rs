//! Extract-Transform-Publish: tool-specific extraction from synthetic
//! sources, XML-tree and NetLogger conversion to the common JSON form,
//! change detection, and publication.

pub mod adapter;
pub mod netlogger;
pub mod snapshot;
pub mod sources;
pub mod xml;

pub use adapter::{routing_key_for, transform_record, EtpAdapter, EtpError};
pub use netlogger::{netlogger_to_json, NetLoggerError};
pub use snapshot::{detect_updates, RawRecord, SnapshotDiff, SnapshotEntry, SourceSnapshot};
pub use sources::{ExtractError, Extractor, SourceKind, SyntheticSource, GANGLIA_METRICS};
pub use xml::{parse_xml, xml_to_json, XmlElement, XmlError, XmlNode};
