use std::collections::HashMap;
use std::io::Read;

use sha2::{Digest, Sha256};

use super::{
    Access, CallRecord, DatasetStore, EdgeKind, FieldAccess, FieldAccessLog, ObjectRecord, RefEdge,
    SourceLoc, StoreError, UNKNOWN_CLASS,
};
use crate::trace::{decode_trace, EventPayload, EventTime, ObjectId, TraceEvent, TraceFile};
use crate::tracegen::INIT;

/// Ingests an in-memory trace. The fingerprint is taken over its encoding.
pub fn ingest(trace: &TraceFile, name: &str) -> Result<DatasetStore, StoreError> {
    let bytes = trace.to_bytes()?;
    ingest_bytes(&bytes[..], name)
}

/// Streams a trace file through the ingestor, hashing the raw bytes.
pub fn ingest_bytes<R: Read>(source: R, name: &str) -> Result<DatasetStore, StoreError> {
    let mut hashing = HashingReader {
        inner: source,
        hasher: Sha256::new(),
    };
    let mut ingestor = Ingestor::new(name)?;
    for event in decode_trace(&mut hashing)? {
        ingestor.push(event?)?;
    }
    let fingerprint = hex::encode(hashing.hasher.finalize());
    Ok(ingestor.finish(fingerprint))
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

struct PendingObject {
    klass: Option<String>,
    allocation_site: Option<SourceLoc>,
    thread: String,
    first: EventTime,
    last: EventTime,
    mentions: u64,
    /// Index into `calls` of the first `<init>` entered on this object.
    first_init: Option<usize>,
}

struct PendingEdge {
    edge: RefEdge,
    closed: bool,
}

/// Single-pass builder; events must arrive in trace order.
pub struct Ingestor {
    name: String,
    objects: HashMap<ObjectId, PendingObject>,
    edges: Vec<PendingEdge>,
    open_fields: HashMap<(ObjectId, String), usize>,
    open_vars: HashMap<(ObjectId, String), Vec<usize>>,
    calls: Vec<CallRecord>,
    stacks: HashMap<String, Vec<usize>>,
    field_log: FieldAccessLog,
    last_time: EventTime,
    event_count: u64,
}

impl Ingestor {
    pub fn new(name: &str) -> Result<Self, StoreError> {
        super::validate_name(name)?;
        Ok(Ingestor {
            name: name.to_string(),
            objects: HashMap::new(),
            edges: Vec::new(),
            open_fields: HashMap::new(),
            open_vars: HashMap::new(),
            calls: Vec::new(),
            stacks: HashMap::new(),
            field_log: FieldAccessLog::new(),
            last_time: EventTime(0),
            event_count: 0,
        })
    }

    pub fn push(&mut self, event: TraceEvent) -> Result<(), StoreError> {
        let t = event.time;
        if let EventPayload::Alloc {
            obj,
            klass,
            alloc_site_file,
            alloc_site_line,
        } = &event.payload
        {
            let site = SourceLoc {
                file: alloc_site_file.clone(),
                line: *alloc_site_line,
            };
            match self.objects.get_mut(obj) {
                Some(o) if o.klass.is_some() => {
                    return Err(StoreError::DuplicateAlloc { id: *obj, time: t })
                }
                // Seen before its allocation: keep the earlier first usage.
                Some(o) => {
                    o.klass = Some(klass.clone());
                    o.allocation_site = Some(site);
                }
                None => {
                    self.objects.insert(
                        *obj,
                        PendingObject {
                            klass: Some(klass.clone()),
                            allocation_site: Some(site),
                            thread: event.thread.clone(),
                            first: t,
                            last: t,
                            mentions: 0,
                            first_init: None,
                        },
                    );
                }
            }
        }
        for id in event.mentions() {
            let o = self.objects.entry(id).or_insert_with(|| PendingObject {
                klass: None,
                allocation_site: None,
                thread: event.thread.clone(),
                first: t,
                last: t,
                mentions: 0,
                first_init: None,
            });
            o.last = t;
            o.mentions += 1;
        }

        match event.payload {
            EventPayload::Alloc { .. } => {}
            EventPayload::MethodEnter {
                callee,
                klass,
                method,
            } => {
                let index = self.calls.len();
                if method == INIT && !callee.is_null() {
                    let o = self.objects.get_mut(&callee).expect("registered above");
                    o.first_init.get_or_insert(index);
                }
                self.calls.push(CallRecord {
                    callee,
                    klass,
                    method,
                    thread: event.thread.clone(),
                    enter: t,
                    exit: None,
                });
                self.stacks.entry(event.thread).or_default().push(index);
            }
            EventPayload::MethodExit { callee, method, .. } => {
                let stack = self.stacks.entry(event.thread).or_default();
                let calls = &mut self.calls;
                // Frames above an unmatched exit never returned; they stay open.
                if let Some(pos) = stack
                    .iter()
                    .rposition(|&c| calls[c].callee == callee && calls[c].method == method)
                {
                    calls[stack[pos]].exit = Some(t);
                    stack.truncate(pos);
                }
            }
            EventPayload::FieldStore {
                caller,
                field,
                newval,
                callsite_file,
                callsite_line,
                ..
            } => {
                self.log_access(caller, &field, t, Access::Write);
                let key = (caller, field);
                if let Some(i) = self.open_fields.remove(&key) {
                    self.close(i, t);
                }
                if !newval.is_null() {
                    let i = self.open(RefEdge {
                        source: caller,
                        target: newval,
                        kind: EdgeKind::Field,
                        name: key.1.clone(),
                        start: t,
                        end: t,
                        open_at_end: false,
                        callsite: Some(SourceLoc {
                            file: callsite_file,
                            line: callsite_line,
                        }),
                    });
                    self.open_fields.insert(key, i);
                }
            }
            EventPayload::FieldLoad { caller, field, .. } => {
                self.log_access(caller, &field, t, Access::Read);
            }
            EventPayload::VarStore {
                caller_method,
                caller_class,
                caller_tag,
                var,
                oldval,
                newval,
            } => {
                let key = (
                    caller_tag,
                    format!("var:{var}@{caller_class}.{caller_method}"),
                );
                if !oldval.is_null() {
                    let open = self.open_vars.entry(key.clone()).or_default();
                    if let Some(pos) = open
                        .iter()
                        .rposition(|&i| self.edges[i].edge.target == oldval)
                    {
                        let i = open.remove(pos);
                        self.close(i, t);
                    }
                }
                if !newval.is_null() {
                    let i = self.open(RefEdge {
                        source: caller_tag,
                        target: newval,
                        kind: EdgeKind::Var,
                        name: key.1.clone(),
                        start: t,
                        end: t,
                        open_at_end: false,
                        callsite: None,
                    });
                    self.open_vars.entry(key).or_default().push(i);
                }
            }
            EventPayload::VarLoad { .. } => {}
        }
        self.last_time = t;
        self.event_count += 1;
        Ok(())
    }

    fn log_access(&mut self, object: ObjectId, field: &str, time: EventTime, access: Access) {
        let per_object = self.field_log.entry(object).or_default();
        match per_object.get_mut(field) {
            Some(list) => list.push(FieldAccess { time, access }),
            None => {
                per_object.insert(field.to_string(), vec![FieldAccess { time, access }]);
            }
        }
    }

    fn open(&mut self, edge: RefEdge) -> usize {
        self.edges.push(PendingEdge {
            edge,
            closed: false,
        });
        self.edges.len() - 1
    }

    fn close(&mut self, i: usize, t: EventTime) {
        let e = &mut self.edges[i];
        e.edge.end = t;
        e.closed = true;
    }

    pub fn finish(self, fingerprint: String) -> DatasetStore {
        let trace_end = self.last_time.next();
        let calls = self.calls;
        let objects = self
            .objects
            .into_iter()
            .map(|(id, o)| {
                // Window: allocation up to the exit of the first constructor
                // entered on the object; an unfinished constructor spans the trace.
                let construction_end = match o.first_init {
                    Some(c) => calls[c].exit.unwrap_or(self.last_time),
                    None => o.first,
                };
                ObjectRecord {
                    id,
                    klass: o.klass.unwrap_or_else(|| UNKNOWN_CLASS.to_string()),
                    allocation_site: o.allocation_site,
                    thread: o.thread,
                    firstusage: o.first,
                    lastusage: o.last,
                    construction_end: construction_end.max(o.first),
                    mentions: o.mentions,
                }
            })
            .collect();
        let edges = self
            .edges
            .into_iter()
            .map(|p| {
                let mut e = p.edge;
                if !p.closed {
                    e.end = trace_end;
                    e.open_at_end = true;
                }
                e
            })
            .collect();
        DatasetStore::from_tables(
            self.name,
            fingerprint,
            self.event_count,
            objects,
            edges,
            calls,
            self.field_log,
        )
    }
}
