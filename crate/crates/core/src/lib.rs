//! Authorship attribution for research manuscripts from their text content
//! and the surnames cited in their bibliography.

pub mod checkpoint;
pub mod disambig;
pub mod encoder;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod hashing;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod paper;
pub mod pipeline;
pub mod preprocess;
pub mod sidecar;
pub mod store;
pub mod synth;
pub mod refparse;

pub use error::{Error, Result, Stage};
