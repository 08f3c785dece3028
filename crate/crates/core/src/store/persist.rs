//! On-disk dataset directories.
//!
//! ```text
//! <dir>/trace.spn      the original trace file
//! <dir>/tables.bin     serialized tables, little-endian, u16-prefixed text
//! <dir>/manifest.json  DatasetManifest
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Access, CallRecord, DatasetStore, EdgeKind, FieldAccess, FieldAccessLog, ObjectRecord, RefEdge,
    SourceLoc, StoreError,
};
use crate::trace::{EventTime, ObjectId};

pub const TRACE_FILE: &str = "trace.spn";
pub const TABLES_FILE: &str = "tables.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const TABLES_MAGIC: &[u8; 8] = b"SPNTABLE";
const TABLES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetManifest {
    pub name: String,
    pub object_count: u64,
    pub event_count: u64,
    pub class_count: u64,
    pub ingested_at: String,
    pub fingerprint: String,
}

impl DatasetManifest {
    pub fn for_store(store: &DatasetStore, ingested_at: &str) -> Self {
        DatasetManifest {
            name: store.name().to_string(),
            object_count: store.objects().len() as u64,
            event_count: store.event_count(),
            class_count: store.class_count() as u64,
            ingested_at: ingested_at.to_string(),
            fingerprint: store.fingerprint().to_string(),
        }
    }
}

/// Writes all three files into `dir`, creating it if needed. Each file is
/// written to a temporary sibling and renamed into place.
pub fn save(
    store: &DatasetStore,
    trace_bytes: &[u8],
    dir: &Path,
    ingested_at: &str,
) -> Result<DatasetManifest, StoreError> {
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest::for_store(store, ingested_at);
    write_atomic(dir, TRACE_FILE, trace_bytes)?;
    write_atomic(dir, TABLES_FILE, &encode_tables(store)?)?;
    write_atomic(dir, MANIFEST_FILE, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(DatasetStore, DatasetManifest), StoreError> {
    let manifest = load_manifest(dir)?;
    let bytes = fs::read(dir.join(TABLES_FILE))?;
    let store = decode_tables(&bytes)?;
    Ok((store, manifest))
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest, StoreError> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, s: &str) -> Result<(), StoreError> {
        let len = u16::try_from(s.len()).map_err(|_| StoreError::CorruptTables {
            offset: self.0.len() as u64,
            reason: format!("text of {} bytes is too long", s.len()),
        })?;
        self.0.extend_from_slice(&len.to_le_bytes());
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn site(&mut self, site: &Option<SourceLoc>) -> Result<(), StoreError> {
        match site {
            Some(s) => {
                self.u8(1);
                self.text(&s.file)?;
                self.u64(s.line);
            }
            None => self.u8(0),
        }
        Ok(())
    }
}

pub(crate) fn encode_tables(store: &DatasetStore) -> Result<Vec<u8>, StoreError> {
    let mut out = Out(Vec::new());
    out.0.extend_from_slice(TABLES_MAGIC);
    out.0.extend_from_slice(&TABLES_VERSION.to_le_bytes());
    out.text(store.name())?;
    out.text(store.fingerprint())?;
    out.u64(store.event_count());

    out.u64(store.objects().len() as u64);
    for o in store.objects() {
        out.u64(o.id.0);
        out.text(&o.klass)?;
        out.site(&o.allocation_site)?;
        out.text(&o.thread)?;
        out.u64(o.firstusage.0);
        out.u64(o.lastusage.0);
        out.u64(o.construction_end.0);
        out.u64(o.mentions);
    }

    out.u64(store.edges().len() as u64);
    for e in store.edges() {
        out.u64(e.source.0);
        out.u64(e.target.0);
        out.u8(match e.kind {
            EdgeKind::Field => 0,
            EdgeKind::Var => 1,
        });
        out.text(&e.name)?;
        out.u64(e.start.0);
        out.u64(e.end.0);
        out.u8(e.open_at_end as u8);
        out.site(&e.callsite)?;
    }

    out.u64(store.calls().len() as u64);
    for c in store.calls() {
        out.u64(c.callee.0);
        out.text(&c.klass)?;
        out.text(&c.method)?;
        out.text(&c.thread)?;
        out.u64(c.enter.0);
        match c.exit {
            Some(t) => {
                out.u8(1);
                out.u64(t.0);
            }
            None => out.u8(0),
        }
    }

    let entries: usize = store.field_log().values().map(|m| m.len()).sum();
    out.u64(entries as u64);
    for (object, fields) in store.field_log() {
        for (field, accesses) in fields {
            out.u64(object.0);
            out.text(field)?;
            out.u64(accesses.len() as u64);
            for a in accesses {
                out.u64(a.time.0);
                out.u8(match a.access {
                    Access::Read => 0,
                    Access::Write => 1,
                });
            }
        }
    }
    Ok(out.0)
}

struct In<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl In<'_> {
    fn corrupt(&self, reason: &str) -> StoreError {
        StoreError::CorruptTables {
            offset: self.pos as u64,
            reason: reason.to_string(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&[u8], StoreError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self) -> Result<usize, StoreError> {
        let n = self.u64()?;
        // Every row takes at least one byte; rejects absurd counts early.
        if n > (self.bytes.len() - self.pos) as u64 {
            return Err(self.corrupt("row count exceeds file size"));
        }
        Ok(n as usize)
    }
    fn text(&mut self) -> Result<String, StoreError> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        let at = self.pos;
        let raw = self.take(len)?.to_vec();
        String::from_utf8(raw).map_err(|_| StoreError::CorruptTables {
            offset: at as u64,
            reason: "invalid UTF-8".into(),
        })
    }
    fn flag(&mut self) -> Result<bool, StoreError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(self.corrupt("invalid flag byte")),
        }
    }
    fn site(&mut self) -> Result<Option<SourceLoc>, StoreError> {
        if self.flag()? {
            Ok(Some(SourceLoc {
                file: self.text()?,
                line: self.u64()?,
            }))
        } else {
            Ok(None)
        }
    }
}

pub(crate) fn decode_tables(bytes: &[u8]) -> Result<DatasetStore, StoreError> {
    let mut r = In { bytes, pos: 0 };
    if r.take(8)? != TABLES_MAGIC {
        return Err(StoreError::CorruptTables {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != TABLES_VERSION {
        return Err(StoreError::CorruptTables {
            offset: 8,
            reason: format!("unsupported version {version}"),
        });
    }
    let name = r.text()?;
    let fingerprint = r.text()?;
    let event_count = r.u64()?;

    let n = r.count()?;
    let mut objects = Vec::with_capacity(n);
    for _ in 0..n {
        objects.push(ObjectRecord {
            id: ObjectId(r.u64()?),
            klass: r.text()?,
            allocation_site: r.site()?,
            thread: r.text()?,
            firstusage: EventTime(r.u64()?),
            lastusage: EventTime(r.u64()?),
            construction_end: EventTime(r.u64()?),
            mentions: r.u64()?,
        });
    }

    let n = r.count()?;
    let mut edges = Vec::with_capacity(n);
    for _ in 0..n {
        edges.push(RefEdge {
            source: ObjectId(r.u64()?),
            target: ObjectId(r.u64()?),
            kind: match r.u8()? {
                0 => EdgeKind::Field,
                1 => EdgeKind::Var,
                _ => return Err(r.corrupt("invalid edge kind")),
            },
            name: r.text()?,
            start: EventTime(r.u64()?),
            end: EventTime(r.u64()?),
            open_at_end: r.flag()?,
            callsite: r.site()?,
        });
    }

    let n = r.count()?;
    let mut calls = Vec::with_capacity(n);
    for _ in 0..n {
        calls.push(CallRecord {
            callee: ObjectId(r.u64()?),
            klass: r.text()?,
            method: r.text()?,
            thread: r.text()?,
            enter: EventTime(r.u64()?),
            exit: if r.flag()? {
                Some(EventTime(r.u64()?))
            } else {
                None
            },
        });
    }

    let n = r.count()?;
    let mut field_log = FieldAccessLog::new();
    for _ in 0..n {
        let object = ObjectId(r.u64()?);
        let field = r.text()?;
        let k = r.count()?;
        let mut accesses = Vec::with_capacity(k);
        for _ in 0..k {
            accesses.push(FieldAccess {
                time: EventTime(r.u64()?),
                access: if r.flag()? {
                    Access::Write
                } else {
                    Access::Read
                },
            });
        }
        field_log.entry(object).or_default().insert(field, accesses);
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing data"));
    }
    Ok(DatasetStore::from_tables(
        name,
        fingerprint,
        event_count,
        objects,
        edges,
        calls,
        field_log,
    ))
}
