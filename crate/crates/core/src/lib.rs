//! Heap trace analysis: a binary trace format, a toy tracing interpreter,
//! an immutable dataset store, and a cached query engine over object sets.

pub mod analytics;
pub mod query;
pub mod store;
pub mod trace;
pub mod tracegen;
