//! The heap query language: parsing, canonical cache keys, cached
//! evaluation over object sets, and an index-free reference evaluator.

mod ast;
mod cache;
mod eval;
mod objset;
pub mod oracle;
mod parse;
pub mod random;

pub use ast::{canonical_form, canonicalize, Primitive, QueryExpr, Unary};
pub use cache::{CacheError, CacheOutcome, CacheStats, QueryCache};
pub use eval::{evaluate, evaluate_set, SelectionResult};
pub use objset::ObjSet;
pub use parse::{parse, ParseError, ParseErrorKind};
