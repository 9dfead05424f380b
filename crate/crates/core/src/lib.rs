//! Extraction engine for residual data left on Android and iOS devices by the
//! Kardia ECG companion app (`com.alivecor.aliveecg` /
//! `com.alivecor.professional.aliveecg`).
//!
//! The crate is organised around the artifacts themselves:
//!
//! - [`atc`] — the chunked `.atc` ECG file format ("ALIVE" magic)
//! - [`sqlite`] — a read-only reader for the SQLite database file format,
//!   independent of any SQL library, so evidence files are never opened for
//!   writing or journal replay
//! - [`propertylist`] — XML and binary (`bplist00`) property list reader
//! - [`prefs_xml`] — Android `shared_prefs` key/value XML reader
//! - [`android`] / [`ios`] — per-platform extractors producing a [`model::CaseFile`]
//! - [`timeline`] — merged chronological event view plus cross-source
//!   consistency analysis
//! - [`fixture`] — synthetic dump generator used as the round-trip oracle in
//!   tests and available from the CLI
//! - [`report`] — canonical JSON / CSV / text reporting

pub mod android;
pub mod atc;
pub mod fixture;
pub mod ios;
pub mod model;
pub mod prefs_xml;
pub mod propertylist;
pub mod report;
pub mod sqlite;
pub mod timeline;
pub mod timestamp;
pub mod units;
mod xmlutil;

pub use model::{CaseFile, EvidenceItem, Platform};
pub use report::CaseReport;
pub use timestamp::{ForensicTimestamp, TimestampEncoding};
