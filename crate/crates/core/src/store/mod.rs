//! Immutable post-ingestion dataset: objects, reference edges, calls, and
//! the per-field access log, with the adjacency indexes the query engine
//! walks.

mod ingest;
pub mod persist;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{EventTime, ObjectId, TraceError};

pub use ingest::{ingest, ingest_bytes, Ingestor};
pub use persist::DatasetManifest;

/// Class recorded for objects that never had an `Alloc` event.
pub const UNKNOWN_CLASS: &str = "<unknown>";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub line: u64,
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub klass: String,
    pub allocation_site: Option<SourceLoc>,
    pub thread: String,
    pub firstusage: EventTime,
    pub lastusage: EventTime,
    /// Last event of the construction window; writes after it are mutations.
    pub construction_end: EventTime,
    /// Number of payload fields across the trace naming this object.
    pub mentions: u64,
}

impl ObjectRecord {
    pub fn life_time(&self) -> u64 {
        self.lastusage.0 - self.firstusage.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Field,
    Var,
}

/// A reference from `source` to `target` live over `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RefEdge {
    /// `ObjectId::NULL` for references held by static frames.
    pub source: ObjectId,
    pub target: ObjectId,
    pub kind: EdgeKind,
    pub name: String,
    pub start: EventTime,
    pub end: EventTime,
    /// The reference was still held when the trace ended.
    pub open_at_end: bool,
    pub callsite: Option<SourceLoc>,
}

impl RefEdge {
    pub fn overlaps(&self, other: &RefEdge) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CallRecord {
    pub callee: ObjectId,
    pub klass: String,
    pub method: String,
    pub thread: String,
    pub enter: EventTime,
    pub exit: Option<EventTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldAccess {
    pub time: EventTime,
    pub access: Access,
}

/// Ordered accesses per object, then per field name.
pub type FieldAccessLog = BTreeMap<ObjectId, BTreeMap<String, Vec<FieldAccess>>>;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Decode(#[from] TraceError),
    #[error("object {id} allocated twice (second at t{time})")]
    DuplicateAlloc { id: ObjectId, time: EventTime },
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("unknown object variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid dataset name `{0}`")]
    InvalidName(String),
    #[error("corrupt table file at offset {offset}: {reason}")]
    CorruptTables { offset: u64, reason: String },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense per-object adjacency built once after ingest or load.
#[derive(Debug, Clone, Default)]
pub(crate) struct Adjacency {
    pub out_any: Vec<Vec<u32>>,
    pub out_field: Vec<Vec<u32>>,
    pub in_any: Vec<Vec<u32>>,
    pub in_field: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct DatasetStore {
    name: String,
    fingerprint: String,
    event_count: u64,
    objects: Vec<ObjectRecord>,
    edges: Vec<RefEdge>,
    calls: Vec<CallRecord>,
    field_log: FieldAccessLog,
    index: HashMap<ObjectId, usize>,
    edges_by_source: HashMap<ObjectId, Vec<usize>>,
    edges_by_target: HashMap<ObjectId, Vec<usize>>,
    pub(crate) adjacency: Adjacency,
}

impl PartialEq for DatasetStore {
    /// Table-by-table equality; indexes are derived.
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.fingerprint == other.fingerprint
            && self.event_count == other.event_count
            && self.objects == other.objects
            && self.edges == other.edges
            && self.calls == other.calls
            && self.field_log == other.field_log
    }
}

impl DatasetStore {
    pub(crate) fn from_tables(
        name: String,
        fingerprint: String,
        event_count: u64,
        mut objects: Vec<ObjectRecord>,
        edges: Vec<RefEdge>,
        calls: Vec<CallRecord>,
        field_log: FieldAccessLog,
    ) -> Self {
        objects.sort_by_key(|o| o.id);
        let index: HashMap<ObjectId, usize> =
            objects.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        let mut edges_by_source: HashMap<ObjectId, Vec<usize>> = HashMap::new();
        let mut edges_by_target: HashMap<ObjectId, Vec<usize>> = HashMap::new();
        let n = objects.len();
        let mut adjacency = Adjacency {
            out_any: vec![Vec::new(); n],
            out_field: vec![Vec::new(); n],
            in_any: vec![Vec::new(); n],
            in_field: vec![Vec::new(); n],
        };
        for (i, e) in edges.iter().enumerate() {
            edges_by_source.entry(e.source).or_default().push(i);
            edges_by_target.entry(e.target).or_default().push(i);
            let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) else {
                continue;
            };
            let (s, t) = (s as u32, t as u32);
            adjacency.out_any[s as usize].push(t);
            adjacency.in_any[t as usize].push(s);
            if e.kind == EdgeKind::Field {
                adjacency.out_field[s as usize].push(t);
                adjacency.in_field[t as usize].push(s);
            }
        }
        for list in [
            &mut adjacency.out_any,
            &mut adjacency.out_field,
            &mut adjacency.in_any,
            &mut adjacency.in_field,
        ] {
            for l in list.iter_mut() {
                l.sort_unstable();
                l.dedup();
            }
        }
        DatasetStore {
            name,
            fingerprint,
            event_count,
            objects,
            edges,
            calls,
            field_log,
            index,
            edges_by_source,
            edges_by_target,
            adjacency,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// SHA-256 of the encoded trace this store was ingested from.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// All objects, ascending by id.
    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectRecord> {
        self.index.get(&id).map(|&i| &self.objects[i])
    }

    /// Position of `id` in [`objects`](Self::objects).
    pub fn dense_index(&self, id: ObjectId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn edges(&self) -> &[RefEdge] {
        &self.edges
    }

    pub fn edges_from(&self, id: ObjectId) -> impl Iterator<Item = &RefEdge> {
        self.edges_by_source
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn edges_to(&self, id: ObjectId) -> impl Iterator<Item = &RefEdge> {
        self.edges_by_target
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn field_log(&self) -> &FieldAccessLog {
        &self.field_log
    }

    pub fn field_accesses(&self, id: ObjectId) -> Option<&BTreeMap<String, Vec<FieldAccess>>> {
        self.field_log.get(&id)
    }

    pub fn class_count(&self) -> usize {
        let mut classes: Vec<&str> = self.objects.iter().map(|o| o.klass.as_str()).collect();
        classes.sort_unstable();
        classes.dedup();
        classes.len()
    }

    pub fn object_variable(&self, id: ObjectId, var: &str) -> Result<VarValue, StoreError> {
        let var: ObjectVariable = var.parse()?;
        let record = self.object(id).ok_or(StoreError::UnknownObject(id))?;
        Ok(var.of(record))
    }
}

/// Per-object attributes available for summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectVariable {
    Klass,
    AllocationSite,
    Thread,
    FirstUsage,
    LastUsage,
    LifeTime,
    Log10LifeTime,
}

impl ObjectVariable {
    pub const ALL: [ObjectVariable; 7] = [
        ObjectVariable::Klass,
        ObjectVariable::AllocationSite,
        ObjectVariable::Thread,
        ObjectVariable::FirstUsage,
        ObjectVariable::LastUsage,
        ObjectVariable::LifeTime,
        ObjectVariable::Log10LifeTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectVariable::Klass => "klass",
            ObjectVariable::AllocationSite => "allocationSite",
            ObjectVariable::Thread => "thread",
            ObjectVariable::FirstUsage => "firstusage",
            ObjectVariable::LastUsage => "lastusage",
            ObjectVariable::LifeTime => "lifeTime",
            ObjectVariable::Log10LifeTime => "log10lifeTime",
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(
            self,
            ObjectVariable::Klass | ObjectVariable::AllocationSite | ObjectVariable::Thread
        )
    }

    pub fn of(self, o: &ObjectRecord) -> VarValue {
        match self {
            ObjectVariable::Klass => VarValue::Text(o.klass.clone()),
            ObjectVariable::AllocationSite => VarValue::Text(
                o.allocation_site
                    .as_ref()
                    .map_or_else(|| "<unknown>".to_string(), |s| s.to_string()),
            ),
            ObjectVariable::Thread => VarValue::Text(o.thread.clone()),
            ObjectVariable::FirstUsage => VarValue::Number(o.firstusage.0 as f64),
            ObjectVariable::LastUsage => VarValue::Number(o.lastusage.0 as f64),
            ObjectVariable::LifeTime => VarValue::Number(o.life_time() as f64),
            ObjectVariable::Log10LifeTime => VarValue::Number((o.life_time() as f64 + 1.0).log10()),
        }
    }
}

impl FromStr for ObjectVariable {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectVariable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| StoreError::UnknownVariable(s.to_string()))
    }
}

impl fmt::Display for ObjectVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum VarValue {
    Text(String),
    Number(f64),
}

/// Dataset names double as URL segments and directory names.
pub fn validate_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidName(name.to_string()))
    }
}
