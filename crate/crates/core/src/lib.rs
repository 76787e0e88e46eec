//! Discovery of business-artifact lifecycles from case-less event logs.
//!
//! The crate is organized as a pipeline:
//!
//! ```text
//! raw log > ingest > schema (keys, entities, foreign keys) > artifact view
//!         > lifecycle logs > petri (mining, validation) > gsm (translation)
//! ```
//!
//! Each stage consumes and produces plain serializable values, so stages can
//! be run in-process or through the file-based CLI handoffs.

pub mod artifact;
pub mod error;
pub mod gen;
pub mod gsm;
pub mod ingest;
pub mod petri;
pub mod schema;
pub mod table;
pub mod translate;

pub use error::{Error, Result};
pub use ingest::{Database, Event, RawLog, Timestamp};
pub use petri::{Marking, PetriNet};
