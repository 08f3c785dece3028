//! HTTP API and command-line front end for heap trace datasets.
//!
//! ```text
//! GET /datasets
//! GET /json/{dataset}/query/{query}?vis={variable}
//! GET /json/{dataset}/matrix/{q1}/{q2}/...
//! GET /json/{dataset}/objects/{id}
//! ```

pub mod api;
pub mod error;
pub mod registry;
pub mod routes;
pub mod urls;

pub use error::ApiError;
pub use registry::{ingest_trace_file, Dataset, Registry};
pub use routes::{router, AppState};
