//! Event vocabulary and the binary trace file format.
//!
//! A trace file is little-endian throughout:
//!
//! ```text
//! header:  "SPNTRACE" (8 bytes) | version: u32 | event count: u64
//! record:  time: u64 | kind: u8 | thread: text | payload...
//! text:    length: u16 | UTF-8 bytes
//! ```
//!
//! Object ids and line numbers are `u64`, variable slots are `u8`. Payload
//! fields follow the field order of [`EventPayload`].

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"SPNTRACE";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 8 + 4 + 8;

/// Identity of a heap object. `0` is the null reference.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl ObjectId {
    pub const NULL: ObjectId = ObjectId(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Logical clock: the 1-based index of an event in its trace.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EventTime(pub u64);

impl EventTime {
    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> EventTime {
        EventTime(self.0 + 1)
    }
}

impl fmt::Display for EventTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EventKind {
    Alloc = 1,
    MethodEnter = 2,
    MethodExit = 3,
    FieldStore = 4,
    FieldLoad = 5,
    VarStore = 6,
    VarLoad = 7,
}

impl EventKind {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<EventKind> {
        Some(match tag {
            1 => EventKind::Alloc,
            2 => EventKind::MethodEnter,
            3 => EventKind::MethodExit,
            4 => EventKind::FieldStore,
            5 => EventKind::FieldLoad,
            6 => EventKind::VarStore,
            7 => EventKind::VarLoad,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    Alloc {
        obj: ObjectId,
        klass: String,
        alloc_site_file: String,
        alloc_site_line: u64,
    },
    MethodEnter {
        callee: ObjectId,
        klass: String,
        method: String,
    },
    MethodExit {
        callee: ObjectId,
        klass: String,
        method: String,
    },
    FieldStore {
        caller: ObjectId,
        field: String,
        oldval: ObjectId,
        newval: ObjectId,
        callsite_file: String,
        callsite_line: u64,
    },
    FieldLoad {
        caller: ObjectId,
        field: String,
        value: ObjectId,
    },
    VarStore {
        caller_method: String,
        caller_class: String,
        caller_tag: ObjectId,
        var: u8,
        oldval: ObjectId,
        newval: ObjectId,
    },
    VarLoad {
        caller_method: String,
        caller_class: String,
        caller_tag: ObjectId,
        var: u8,
        value: ObjectId,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Alloc { .. } => EventKind::Alloc,
            EventPayload::MethodEnter { .. } => EventKind::MethodEnter,
            EventPayload::MethodExit { .. } => EventKind::MethodExit,
            EventPayload::FieldStore { .. } => EventKind::FieldStore,
            EventPayload::FieldLoad { .. } => EventKind::FieldLoad,
            EventPayload::VarStore { .. } => EventKind::VarStore,
            EventPayload::VarLoad { .. } => EventKind::VarLoad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: EventTime,
    pub thread: String,
    pub payload: EventPayload,
}

impl TraceEvent {
    pub fn new(time: u64, payload: EventPayload) -> Self {
        TraceEvent {
            time: EventTime(time),
            thread: "main".to_string(),
            payload,
        }
    }

    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    /// Every non-null object id in the payload, one item per payload field.
    pub fn mentions(&self) -> impl Iterator<Item = ObjectId> {
        let slots: [Option<ObjectId>; 3] = match &self.payload {
            EventPayload::Alloc { obj, .. } => [Some(*obj), None, None],
            EventPayload::MethodEnter { callee, .. } | EventPayload::MethodExit { callee, .. } => {
                [Some(*callee), None, None]
            }
            EventPayload::FieldStore {
                caller,
                oldval,
                newval,
                ..
            } => [Some(*caller), Some(*oldval), Some(*newval)],
            EventPayload::FieldLoad { caller, value, .. } => [Some(*caller), Some(*value), None],
            EventPayload::VarStore {
                caller_tag,
                oldval,
                newval,
                ..
            } => [Some(*caller_tag), Some(*oldval), Some(*newval)],
            EventPayload::VarLoad {
                caller_tag, value, ..
            } => [Some(*caller_tag), Some(*value), None],
        };
        slots.into_iter().flatten().filter(|id| !id.is_null())
    }
}

/// A complete trace held in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceFile {
    pub events: Vec<TraceEvent>,
}

impl TraceFile {
    pub fn new(events: Vec<TraceEvent>) -> Self {
        TraceFile { events }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TraceError> {
        let mut buf = Vec::new();
        encode_trace(&self.events, &mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let events = decode_trace(bytes)?.collect::<Result<Vec<_>, _>>()?;
        Ok(TraceFile { events })
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: u64 },
    #[error("unsupported format version {found} at offset {offset}")]
    VersionMismatch { offset: u64, found: u32 },
    #[error("truncated record after offset {offset}")]
    Truncated { offset: u64 },
    #[error("unknown event kind {tag} at offset {offset}")]
    UnknownKind { offset: u64, tag: u8 },
    #[error("invalid UTF-8 text at offset {offset}")]
    InvalidUtf8 { offset: u64 },
    #[error("trailing data at offset {offset}")]
    TrailingData { offset: u64 },
    #[error("event {index}: time {found} does not follow {previous}")]
    NonMonotonicTime {
        index: u64,
        previous: u64,
        found: u64,
    },
    #[error("event {index}: text of {len} bytes exceeds the u16 length prefix")]
    TextTooLong { index: u64, len: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_time(index: u64, previous: EventTime, time: EventTime) -> Result<(), TraceError> {
    if time <= previous {
        return Err(TraceError::NonMonotonicTime {
            index,
            previous: previous.0,
            found: time.0,
        });
    }
    Ok(())
}

/// Writes the header followed by one record per event. Returns the number
/// of bytes written. Nothing is written when validation fails.
pub fn encode_trace<W: Write>(events: &[TraceEvent], mut sink: W) -> Result<u64, TraceError> {
    let mut previous = EventTime(0);
    for (index, event) in events.iter().enumerate() {
        check_time(index as u64, previous, event.time)?;
        previous = event.time;
    }

    sink.write_all(MAGIC)?;
    sink.write_all(&FORMAT_VERSION.to_le_bytes())?;
    sink.write_all(&(events.len() as u64).to_le_bytes())?;
    let mut written = HEADER_LEN;

    let mut record = Vec::with_capacity(128);
    for (index, event) in events.iter().enumerate() {
        record.clear();
        encode_record(index as u64, event, &mut record)?;
        sink.write_all(&record)?;
        written += record.len() as u64;
    }
    Ok(written)
}

fn encode_record(index: u64, event: &TraceEvent, out: &mut Vec<u8>) -> Result<(), TraceError> {
    let text = |out: &mut Vec<u8>, s: &str| -> Result<(), TraceError> {
        let len = u16::try_from(s.len()).map_err(|_| TraceError::TextTooLong {
            index,
            len: s.len(),
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(s.as_bytes());
        Ok(())
    };
    let u64le = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());

    u64le(out, event.time.0);
    out.push(event.kind().tag());
    text(out, &event.thread)?;
    match &event.payload {
        EventPayload::Alloc {
            obj,
            klass,
            alloc_site_file,
            alloc_site_line,
        } => {
            u64le(out, obj.0);
            text(out, klass)?;
            text(out, alloc_site_file)?;
            u64le(out, *alloc_site_line);
        }
        EventPayload::MethodEnter {
            callee,
            klass,
            method,
        }
        | EventPayload::MethodExit {
            callee,
            klass,
            method,
        } => {
            u64le(out, callee.0);
            text(out, klass)?;
            text(out, method)?;
        }
        EventPayload::FieldStore {
            caller,
            field,
            oldval,
            newval,
            callsite_file,
            callsite_line,
        } => {
            u64le(out, caller.0);
            text(out, field)?;
            u64le(out, oldval.0);
            u64le(out, newval.0);
            text(out, callsite_file)?;
            u64le(out, *callsite_line);
        }
        EventPayload::FieldLoad {
            caller,
            field,
            value,
        } => {
            u64le(out, caller.0);
            text(out, field)?;
            u64le(out, value.0);
        }
        EventPayload::VarStore {
            caller_method,
            caller_class,
            caller_tag,
            var,
            oldval,
            newval,
        } => {
            text(out, caller_method)?;
            text(out, caller_class)?;
            u64le(out, caller_tag.0);
            out.push(*var);
            u64le(out, oldval.0);
            u64le(out, newval.0);
        }
        EventPayload::VarLoad {
            caller_method,
            caller_class,
            caller_tag,
            var,
            value,
        } => {
            text(out, caller_method)?;
            text(out, caller_class)?;
            u64le(out, caller_tag.0);
            out.push(*var);
            u64le(out, value.0);
        }
    }
    Ok(())
}

/// Reads the header and returns a streaming iterator over the records.
pub fn decode_trace<R: Read>(source: R) -> Result<TraceReader<R>, TraceError> {
    TraceReader::new(source)
}

/// Streaming decoder. Memory use is bounded by the largest single record.
pub struct TraceReader<R> {
    source: R,
    offset: u64,
    declared: u64,
    read: u64,
    previous: EventTime,
    done: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut source: R) -> Result<Self, TraceError> {
        let mut magic = [0u8; 8];
        let got = read_up_to(&mut source, &mut magic)?;
        if magic[..got] != MAGIC[..got] {
            return Err(TraceError::BadMagic { offset: 0 });
        }
        if got < magic.len() {
            return Err(TraceError::Truncated { offset: 0 });
        }
        let mut rest = [0u8; 12];
        if read_up_to(&mut source, &mut rest)? < rest.len() {
            return Err(TraceError::Truncated { offset: 0 });
        }
        let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(TraceError::VersionMismatch {
                offset: 8,
                found: version,
            });
        }
        let declared = u64::from_le_bytes(rest[4..].try_into().unwrap());
        Ok(TraceReader {
            source,
            offset: HEADER_LEN,
            declared,
            read: 0,
            previous: EventTime(0),
            done: false,
        })
    }

    /// Event count declared in the header.
    pub fn declared_count(&self) -> u64 {
        self.declared
    }

    /// Byte offset just past the last complete record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn read_record(&mut self) -> Result<TraceEvent, TraceError> {
        let start = self.offset;
        let mut cur = Cursor {
            source: &mut self.source,
            start,
            pos: start,
        };
        let time = EventTime(cur.u64()?);
        let tag_offset = cur.pos;
        let tag = cur.u8()?;
        let kind = EventKind::from_tag(tag).ok_or(TraceError::UnknownKind {
            offset: tag_offset,
            tag,
        })?;
        let thread = cur.text()?;
        let payload = match kind {
            EventKind::Alloc => EventPayload::Alloc {
                obj: ObjectId(cur.u64()?),
                klass: cur.text()?,
                alloc_site_file: cur.text()?,
                alloc_site_line: cur.u64()?,
            },
            EventKind::MethodEnter => EventPayload::MethodEnter {
                callee: ObjectId(cur.u64()?),
                klass: cur.text()?,
                method: cur.text()?,
            },
            EventKind::MethodExit => EventPayload::MethodExit {
                callee: ObjectId(cur.u64()?),
                klass: cur.text()?,
                method: cur.text()?,
            },
            EventKind::FieldStore => EventPayload::FieldStore {
                caller: ObjectId(cur.u64()?),
                field: cur.text()?,
                oldval: ObjectId(cur.u64()?),
                newval: ObjectId(cur.u64()?),
                callsite_file: cur.text()?,
                callsite_line: cur.u64()?,
            },
            EventKind::FieldLoad => EventPayload::FieldLoad {
                caller: ObjectId(cur.u64()?),
                field: cur.text()?,
                value: ObjectId(cur.u64()?),
            },
            EventKind::VarStore => EventPayload::VarStore {
                caller_method: cur.text()?,
                caller_class: cur.text()?,
                caller_tag: ObjectId(cur.u64()?),
                var: cur.u8()?,
                oldval: ObjectId(cur.u64()?),
                newval: ObjectId(cur.u64()?),
            },
            EventKind::VarLoad => EventPayload::VarLoad {
                caller_method: cur.text()?,
                caller_class: cur.text()?,
                caller_tag: ObjectId(cur.u64()?),
                var: cur.u8()?,
                value: ObjectId(cur.u64()?),
            },
        };
        let end = cur.pos;
        check_time(self.read, self.previous, time)?;
        self.offset = end;
        self.previous = time;
        Ok(TraceEvent {
            time,
            thread,
            payload,
        })
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.read == self.declared {
            self.done = true;
            let mut probe = [0u8; 1];
            return match read_up_to(&mut self.source, &mut probe) {
                Ok(0) => None,
                Ok(_) => Some(Err(TraceError::TrailingData {
                    offset: self.offset,
                })),
                Err(e) => Some(Err(e.into())),
            };
        }
        let item = self.read_record();
        match item {
            Ok(_) => self.read += 1,
            Err(_) => self.done = true,
        }
        Some(item)
    }
}

struct Cursor<'a, R> {
    source: &'a mut R,
    start: u64,
    pos: u64,
}

impl<R: Read> Cursor<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), TraceError> {
        match self.source.read_exact(buf) {
            Ok(()) => {
                self.pos += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(TraceError::Truncated { offset: self.start })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn text(&mut self) -> Result<String, TraceError> {
        let mut len = [0u8; 2];
        self.fill(&mut len)?;
        let at = self.pos;
        let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
        self.fill(&mut bytes)?;
        String::from_utf8(bytes).map_err(|_| TraceError::InvalidUtf8 { offset: at })
    }
}

fn read_up_to<R: Read>(source: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(t: u64, id: u64, klass: &str) -> TraceEvent {
        TraceEvent::new(
            t,
            EventPayload::Alloc {
                obj: ObjectId(id),
                klass: klass.into(),
                alloc_site_file: "Main.toy".into(),
                alloc_site_line: 3,
            },
        )
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        let n = encode_trace(&[], &mut buf).unwrap();
        assert_eq!(n, HEADER_LEN);
        assert_eq!(buf.len() as u64, HEADER_LEN);
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 0);
        assert!(TraceFile::from_bytes(&buf).unwrap().events.is_empty());
    }

    #[test]
    fn single_alloc_round_trips() {
        let events = vec![alloc(1, 1, "A")];
        let bytes = TraceFile::new(events.clone()).to_bytes().unwrap();
        assert_eq!(TraceFile::from_bytes(&bytes).unwrap().events, events);
    }

    #[test]
    fn single_alloc_layout_is_exact() {
        let bytes = TraceFile::new(vec![alloc(1, 1, "A")]).to_bytes().unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"SPNTRACE");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.push(1);
        expected.extend_from_slice(&4u16.to_le_bytes());
        expected.extend_from_slice(b"main");
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(b"A");
        expected.extend_from_slice(&8u16.to_le_bytes());
        expected.extend_from_slice(b"Main.toy");
        expected.extend_from_slice(&3u64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn encode_rejects_non_monotonic_times() {
        let events = vec![alloc(1, 1, "A"), alloc(3, 2, "B"), alloc(3, 3, "C")];
        let mut buf = Vec::new();
        match encode_trace(&events, &mut buf) {
            Err(TraceError::NonMonotonicTime { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(buf.is_empty());
        assert!(matches!(
            encode_trace(&[alloc(0, 1, "A")], Vec::new()),
            Err(TraceError::NonMonotonicTime { index: 0, .. })
        ));
    }

    #[test]
    fn bad_magic_reported_at_zero() {
        let mut bytes = TraceFile::new(vec![alloc(1, 1, "A")]).to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_trace(&bytes[..]),
            Err(TraceError::BadMagic { offset: 0 })
        ));
        assert!(matches!(
            decode_trace(&b"NOPE"[..]),
            Err(TraceError::BadMagic { offset: 0 })
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = TraceFile::default().to_bytes().unwrap();
        bytes[8] = 2;
        assert!(matches!(
            decode_trace(&bytes[..]),
            Err(TraceError::VersionMismatch {
                offset: 8,
                found: 2
            })
        ));
    }

    #[test]
    fn truncated_record_reports_last_complete_offset() {
        let events = vec![alloc(1, 1, "A"), alloc(2, 2, "B")];
        let bytes = TraceFile::new(events.clone()).to_bytes().unwrap();
        let first_end = {
            let mut one = Vec::new();
            encode_trace(&events[..1], &mut one).unwrap();
            one.len() as u64
        };
        for cut in (first_end as usize + 1)..bytes.len() {
            let mut reader = decode_trace(&bytes[..cut]).unwrap();
            assert_eq!(reader.next().unwrap().unwrap(), events[0]);
            match reader.next() {
                Some(Err(TraceError::Truncated { offset })) => assert_eq!(offset, first_end),
                other => panic!("cut {cut}: unexpected {other:?}"),
            }
            assert!(reader.next().is_none());
        }
        // Cut exactly on the record boundary: the header promised two.
        let mut reader = decode_trace(&bytes[..first_end as usize]).unwrap();
        reader.next().unwrap().unwrap();
        assert!(matches!(
            reader.next(),
            Some(Err(TraceError::Truncated { offset })) if offset == first_end
        ));
    }

    #[test]
    fn unknown_kind_carries_offset() {
        let mut bytes = TraceFile::new(vec![alloc(1, 1, "A")]).to_bytes().unwrap();
        bytes[HEADER_LEN as usize + 8] = 9;
        let mut reader = decode_trace(&bytes[..]).unwrap();
        assert!(matches!(
            reader.next(),
            Some(Err(TraceError::UnknownKind { offset, tag: 9 })) if offset == HEADER_LEN + 8
        ));
    }

    #[test]
    fn decode_rejects_non_monotonic_times() {
        let mut bytes = TraceFile::new(vec![alloc(1, 1, "A"), alloc(2, 2, "B")])
            .to_bytes()
            .unwrap();
        // Rewrite the second record's time to 1.
        let first_len = bytes.len() / 2 - HEADER_LEN as usize / 2;
        let second = HEADER_LEN as usize + first_len;
        bytes[second..second + 8].copy_from_slice(&1u64.to_le_bytes());
        let err = TraceFile::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, TraceError::NonMonotonicTime { index: 1, .. }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = TraceFile::new(vec![alloc(1, 1, "A")]).to_bytes().unwrap();
        let end = bytes.len() as u64;
        bytes.push(0);
        assert!(matches!(
            TraceFile::from_bytes(&bytes),
            Err(TraceError::TrailingData { offset }) if offset == end
        ));
    }

    #[test]
    fn mentions_skip_null() {
        let e = TraceEvent::new(
            4,
            EventPayload::FieldStore {
                caller: ObjectId(1),
                field: "f".into(),
                oldval: ObjectId::NULL,
                newval: ObjectId(2),
                callsite_file: "Main.toy".into(),
                callsite_line: 1,
            },
        );
        assert_eq!(
            e.mentions().collect::<Vec<_>>(),
            vec![ObjectId(1), ObjectId(2)]
        );
    }
}
