//! A tiny heap-manipulating script language and its tracing interpreter.
//!
//! Programs are sequential and single-threaded. Every `New` runs inside a
//! synthetic `<init>` frame on the fresh object; if the class declares an
//! `<init>` procedure its body runs inside that frame with `this` bound.
//! The entry point is the unowned procedure `main`, which runs as a static
//! frame (callee and caller tag 0).

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::trace::{EventPayload, ObjectId, TraceEvent, TraceFile};

pub const MAIN: &str = "main";
pub const INIT: &str = "<init>";
pub const THIS: &str = "this";
pub const STATIC_CLASS: &str = "Main";
pub const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub fields: Vec<String>,
}

impl ClassDecl {
    pub fn new(name: &str, fields: &[&str]) -> Self {
        ClassDecl {
            name: name.to_string(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
        }
    }

    /// Array cells (`[i]`) are accepted on any class.
    pub fn has_field(&self, field: &str) -> bool {
        is_array_cell(field) || self.fields.iter().any(|f| f == field)
    }
}

fn is_array_cell(field: &str) -> bool {
    field.len() > 2
        && field.starts_with('[')
        && field.ends_with(']')
        && field[1..field.len() - 1]
            .bytes()
            .all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    New {
        klass: String,
        target: String,
    },
    StoreField {
        obj: String,
        field: String,
        value: String,
    },
    LoadField {
        obj: String,
        field: String,
        target: String,
    },
    StoreVar {
        target: String,
        source: String,
    },
    Call {
        obj: String,
        method: String,
    },
    Return,
}

impl Stmt {
    pub fn new(klass: &str, target: &str) -> Stmt {
        Stmt::New {
            klass: klass.into(),
            target: target.into(),
        }
    }

    pub fn store_field(obj: &str, field: &str, value: &str) -> Stmt {
        Stmt::StoreField {
            obj: obj.into(),
            field: field.into(),
            value: value.into(),
        }
    }

    pub fn load_field(obj: &str, field: &str, target: &str) -> Stmt {
        Stmt::LoadField {
            obj: obj.into(),
            field: field.into(),
            target: target.into(),
        }
    }

    pub fn store_var(target: &str, source: &str) -> Stmt {
        Stmt::StoreVar {
            target: target.into(),
            source: source.into(),
        }
    }

    pub fn call(obj: &str, method: &str) -> Stmt {
        Stmt::Call {
            obj: obj.into(),
            method: method.into(),
        }
    }

    fn variables(&self) -> Vec<&str> {
        match self {
            Stmt::New { target, .. } => vec![target],
            Stmt::StoreField { obj, value, .. } => vec![obj, value],
            Stmt::LoadField { obj, target, .. } => vec![obj, target],
            Stmt::StoreVar { target, source } => vec![source, target],
            Stmt::Call { obj, .. } => vec![obj],
            Stmt::Return => vec![],
        }
    }

    fn render(&self) -> String {
        let access = |obj: &str, field: &str| {
            if is_array_cell(field) {
                format!("{obj}{field}")
            } else {
                format!("{obj}.{field}")
            }
        };
        match self {
            Stmt::New { klass, target } => format!("{target} = new {klass}"),
            Stmt::StoreField { obj, field, value } => format!("{} = {value}", access(obj, field)),
            Stmt::LoadField { obj, field, target } => format!("{target} = {}", access(obj, field)),
            Stmt::StoreVar { target, source } => format!("{target} = {source}"),
            Stmt::Call { obj, method } => format!("{obj}.{method}()"),
            Stmt::Return => "return".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Procedure {
    /// Owning class; `None` for free procedures callable on any object.
    pub class: Option<String>,
    pub name: String,
    pub body: Vec<Stmt>,
}

impl Procedure {
    pub fn main(body: Vec<Stmt>) -> Self {
        Procedure {
            class: None,
            name: MAIN.to_string(),
            body,
        }
    }

    pub fn method(class: &str, name: &str, body: Vec<Stmt>) -> Self {
        Procedure {
            class: Some(class.to_string()),
            name: name.to_string(),
            body,
        }
    }

    fn title(&self) -> String {
        match &self.class {
            Some(c) => format!("{c}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyProgram {
    /// Source file name used for allocation and call sites.
    pub file: String,
    pub classes: Vec<ClassDecl>,
    pub procedures: Vec<Procedure>,
}

impl ToyProgram {
    pub fn new(classes: Vec<ClassDecl>, procedures: Vec<Procedure>) -> Self {
        ToyProgram {
            file: "Main.toy".to_string(),
            classes,
            procedures,
        }
    }

    /// Program with a single `main` procedure.
    pub fn from_main(classes: Vec<ClassDecl>, main: Vec<Stmt>) -> Self {
        ToyProgram::new(classes, vec![Procedure::main(main)])
    }

    /// Source listing. Line numbers in emitted traces refer to this text:
    /// one line per class, then each procedure as a header line, one line
    /// per statement, and a closing brace. `main` is always listed last.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            let _ = writeln!(out, "class {} {{ {} }}", c.name, c.fields.join(" "));
        }
        for p in self.listing_order() {
            let _ = writeln!(out, "proc {} {{", p.title());
            for s in &p.body {
                let _ = writeln!(out, "  {}", s.render());
            }
            let _ = writeln!(out, "}}");
        }
        out
    }

    fn listing_order(&self) -> impl Iterator<Item = &Procedure> {
        let others = self.procedures.iter().filter(|p| !is_main(p));
        others.chain(self.procedures.iter().filter(|p| is_main(p)))
    }

    /// Line of each procedure's header, indexed like `procedures`.
    fn header_lines(&self) -> Vec<u64> {
        let mut lines = vec![0; self.procedures.len()];
        let mut next = self.classes.len() as u64 + 1;
        let order: Vec<usize> = (0..self.procedures.len())
            .filter(|&i| !is_main(&self.procedures[i]))
            .chain((0..self.procedures.len()).filter(|&i| is_main(&self.procedures[i])))
            .collect();
        for i in order {
            lines[i] = next;
            next += self.procedures[i].body.len() as u64 + 2;
        }
        lines
    }

    fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    fn find_procedure(&self, class: &str, name: &str) -> Option<usize> {
        self.procedures
            .iter()
            .position(|p| p.class.as_deref() == Some(class) && p.name == name)
            .or_else(|| {
                if name == INIT || name == MAIN {
                    return None;
                }
                self.procedures
                    .iter()
                    .position(|p| p.class.is_none() && p.name == name)
            })
    }
}

fn is_main(p: &Procedure) -> bool {
    p.class.is_none() && p.name == MAIN
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpErrorKind {
    #[error("use of unassigned variable `{0}`")]
    UnassignedVariable(String),
    #[error("null dereference of `{0}`")]
    NullDereference(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no field `{field}`")]
    UnknownField { class: String, field: String },
    #[error("class `{class}` has no method `{method}`")]
    UnknownMethod { class: String, method: String },
    #[error("call depth exceeds {0}")]
    CallDepthExceeded(usize),
    #[error("more than 256 variables in one procedure")]
    TooManyVariables,
    #[error("`this` cannot be assigned")]
    AssignToThis,
    #[error("program has no `main` procedure")]
    MissingMain,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{procedure}, statement {stmt}: {kind}")]
pub struct InterpError {
    pub procedure: String,
    pub stmt: usize,
    pub kind: InterpErrorKind,
}

/// Runs `main` and returns the emitted events, times dense from 1.
pub fn run_program(program: &ToyProgram) -> Result<Vec<TraceEvent>, InterpError> {
    let main = main_index(program)?;
    let mut machine = Machine::new(program);
    let mut frame = Frame::new(main, ObjectId::NULL, STATIC_CLASS, program)?;
    machine.run_body(main, &mut frame, 0)?;
    Ok(machine.events)
}

fn main_index(program: &ToyProgram) -> Result<usize, InterpError> {
    program
        .procedures
        .iter()
        .position(is_main)
        .ok_or_else(|| InterpError {
            procedure: MAIN.into(),
            stmt: 0,
            kind: InterpErrorKind::MissingMain,
        })
}

struct Frame {
    procedure: usize,
    title: String,
    method: String,
    this: ObjectId,
    class: String,
    slots: HashMap<String, u8>,
    vars: HashMap<String, ObjectId>,
}

impl Frame {
    fn new(
        procedure: usize,
        this: ObjectId,
        class: &str,
        program: &ToyProgram,
    ) -> Result<Self, InterpError> {
        let proc_ = &program.procedures[procedure];
        let mut frame = Frame {
            procedure,
            title: proc_.title(),
            method: proc_.name.clone(),
            this,
            class: class.to_string(),
            slots: HashMap::new(),
            vars: HashMap::new(),
        };
        if !this.is_null() {
            frame.slots.insert(THIS.to_string(), 0);
            frame.vars.insert(THIS.to_string(), this);
        }
        for (i, stmt) in proc_.body.iter().enumerate() {
            frame.assign_slots(stmt, i)?;
        }
        Ok(frame)
    }

    /// Slots are numbered by first appearance in statement order.
    fn assign_slots(&mut self, stmt: &Stmt, index: usize) -> Result<(), InterpError> {
        for v in stmt.variables() {
            if !self.slots.contains_key(v) {
                let slot = u8::try_from(self.slots.len())
                    .map_err(|_| self.error(index, InterpErrorKind::TooManyVariables))?;
                self.slots.insert(v.to_string(), slot);
            }
        }
        Ok(())
    }

    fn error(&self, stmt: usize, kind: InterpErrorKind) -> InterpError {
        InterpError {
            procedure: self.title.clone(),
            stmt,
            kind,
        }
    }

    fn get(&self, var: &str) -> Result<ObjectId, InterpErrorKind> {
        self.vars
            .get(var)
            .copied()
            .ok_or_else(|| InterpErrorKind::UnassignedVariable(var.to_string()))
    }

    fn get_object(&self, var: &str) -> Result<ObjectId, InterpErrorKind> {
        let id = self.get(var)?;
        if id.is_null() {
            return Err(InterpErrorKind::NullDereference(var.to_string()));
        }
        Ok(id)
    }

    fn bind(&mut self, var: &str, value: ObjectId) -> Result<(), InterpErrorKind> {
        if var == THIS {
            return Err(InterpErrorKind::AssignToThis);
        }
        self.vars.insert(var.to_string(), value);
        Ok(())
    }
}

struct Machine<'p> {
    program: &'p ToyProgram,
    header_lines: Vec<u64>,
    events: Vec<TraceEvent>,
    heap: HashMap<(ObjectId, String), ObjectId>,
    classes: Vec<String>,
}

enum Flow {
    Next,
    Return,
}

impl<'p> Machine<'p> {
    fn new(program: &'p ToyProgram) -> Self {
        Machine {
            program,
            header_lines: program.header_lines(),
            events: Vec::new(),
            heap: HashMap::new(),
            classes: Vec::new(),
        }
    }

    fn emit(&mut self, payload: EventPayload) {
        let time = self.events.len() as u64 + 1;
        self.events.push(TraceEvent::new(time, payload));
    }

    fn class_of(&self, id: ObjectId) -> &str {
        &self.classes[id.0 as usize - 1]
    }

    fn run_body(
        &mut self,
        procedure: usize,
        frame: &mut Frame,
        depth: usize,
    ) -> Result<(), InterpError> {
        let program = self.program;
        for (i, stmt) in program.procedures[procedure].body.iter().enumerate() {
            if let Flow::Return = self.exec(stmt, i, frame, depth)? {
                break;
            }
        }
        Ok(())
    }

    fn check_field(&self, id: ObjectId, field: &str) -> Result<(), InterpErrorKind> {
        let class = self.class_of(id);
        let decl = self
            .program
            .class(class)
            .ok_or_else(|| InterpErrorKind::UnknownClass(class.to_string()))?;
        if !decl.has_field(field) {
            return Err(InterpErrorKind::UnknownField {
                class: class.to_string(),
                field: field.to_string(),
            });
        }
        Ok(())
    }

    fn exec(
        &mut self,
        stmt: &Stmt,
        index: usize,
        frame: &mut Frame,
        depth: usize,
    ) -> Result<Flow, InterpError> {
        let fail = |frame: &Frame, kind| frame.error(index, kind);
        let file = self.program.file.clone();
        let line = self.header_lines[frame.procedure] + 1 + index as u64;
        match stmt {
            Stmt::New { klass, target } => {
                if self.program.class(klass).is_none() {
                    return Err(fail(frame, InterpErrorKind::UnknownClass(klass.clone())));
                }
                if target == THIS {
                    return Err(fail(frame, InterpErrorKind::AssignToThis));
                }
                self.classes.push(klass.clone());
                let id = ObjectId(self.classes.len() as u64);
                self.emit(EventPayload::Alloc {
                    obj: id,
                    klass: klass.clone(),
                    alloc_site_file: file,
                    alloc_site_line: line,
                });
                self.invoke(id, klass, INIT, depth)?;
                frame.bind(target, id).map_err(|k| fail(frame, k))?;
            }
            Stmt::StoreField { obj, field, value } => {
                let (o, v) = (|| Ok((frame.get_object(obj)?, frame.get(value)?)))()
                    .map_err(|k| fail(frame, k))?;
                self.check_field(o, field).map_err(|k| fail(frame, k))?;
                let old = self
                    .heap
                    .insert((o, field.clone()), v)
                    .unwrap_or(ObjectId::NULL);
                self.emit(EventPayload::FieldStore {
                    caller: o,
                    field: field.clone(),
                    oldval: old,
                    newval: v,
                    callsite_file: file,
                    callsite_line: line,
                });
            }
            Stmt::LoadField { obj, field, target } => {
                let o = frame.get_object(obj).map_err(|k| fail(frame, k))?;
                self.check_field(o, field).map_err(|k| fail(frame, k))?;
                let v = self
                    .heap
                    .get(&(o, field.clone()))
                    .copied()
                    .unwrap_or(ObjectId::NULL);
                self.emit(EventPayload::FieldLoad {
                    caller: o,
                    field: field.clone(),
                    value: v,
                });
                frame.bind(target, v).map_err(|k| fail(frame, k))?;
            }
            Stmt::StoreVar { target, source } => {
                let v = frame.get(source).map_err(|k| fail(frame, k))?;
                if target == THIS {
                    return Err(fail(frame, InterpErrorKind::AssignToThis));
                }
                let old = frame.vars.get(target).copied().unwrap_or(ObjectId::NULL);
                self.emit(EventPayload::VarLoad {
                    caller_method: frame.method.clone(),
                    caller_class: frame.class.clone(),
                    caller_tag: frame.this,
                    var: frame.slots[source.as_str()],
                    value: v,
                });
                self.emit(EventPayload::VarStore {
                    caller_method: frame.method.clone(),
                    caller_class: frame.class.clone(),
                    caller_tag: frame.this,
                    var: frame.slots[target.as_str()],
                    oldval: old,
                    newval: v,
                });
                frame.bind(target, v).map_err(|k| fail(frame, k))?;
            }
            Stmt::Call { obj, method } => {
                let o = frame.get_object(obj).map_err(|k| fail(frame, k))?;
                let class = self.class_of(o).to_string();
                if self.program.find_procedure(&class, method).is_none() {
                    return Err(fail(
                        frame,
                        InterpErrorKind::UnknownMethod {
                            class,
                            method: method.clone(),
                        },
                    ));
                }
                self.invoke(o, &class, method, depth)?;
            }
            Stmt::Return => return Ok(Flow::Return),
        }
        Ok(Flow::Next)
    }

    /// Enter/exit frame around the body of `class.method`, if one exists.
    fn invoke(
        &mut self,
        id: ObjectId,
        class: &str,
        method: &str,
        depth: usize,
    ) -> Result<(), InterpError> {
        if depth + 1 > MAX_CALL_DEPTH {
            return Err(InterpError {
                procedure: format!("{class}.{method}"),
                stmt: 0,
                kind: InterpErrorKind::CallDepthExceeded(MAX_CALL_DEPTH),
            });
        }
        self.emit(EventPayload::MethodEnter {
            callee: id,
            klass: class.to_string(),
            method: method.to_string(),
        });
        if let Some(p) = self.program.find_procedure(class, method) {
            let mut frame = Frame::new(p, id, class, self.program)?;
            self.run_body(p, &mut frame, depth + 1)?;
        }
        self.emit(EventPayload::MethodExit {
            callee: id,
            klass: class.to_string(),
            method: method.to_string(),
        });
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

pub const SCENARIOS: [&str; 4] = [
    "t0-minimal",
    "string-like",
    "linkedlist-like",
    "random-soup",
];

/// Size limits for `random-soup`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoupParams {
    pub objects: usize,
    pub events: usize,
}

impl Default for SoupParams {
    fn default() -> Self {
        SoupParams {
            objects: 50,
            events: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// `None` for hand-written traces.
    pub program: Option<ToyProgram>,
    pub trace: TraceFile,
}

pub fn builtin_scenario(name: &str, seed: u64) -> Result<TraceFile, ScenarioError> {
    Ok(Scenario::builtin(name, seed, SoupParams::default())?.trace)
}

impl Scenario {
    pub fn builtin(name: &str, seed: u64, params: SoupParams) -> Result<Scenario, ScenarioError> {
        let program = match name {
            "t0-minimal" => {
                return Ok(Scenario {
                    name: name.to_string(),
                    seed,
                    program: None,
                    trace: TraceFile::new(t0_events()),
                })
            }
            "string-like" => string_like(seed),
            "linkedlist-like" => linkedlist_like(seed),
            "random-soup" => random_soup(seed, params),
            other => return Err(ScenarioError::UnknownScenario(other.to_string())),
        };
        let events = run_program(&program)?;
        Ok(Scenario {
            name: name.to_string(),
            seed,
            program: Some(program),
            trace: TraceFile::new(events),
        })
    }
}

/// The seven-event reference trace. `o2` is allocated inside `o1`'s
/// constructor and has no constructor frame of its own.
pub fn t0_events() -> Vec<TraceEvent> {
    let o1 = ObjectId(1);
    let o2 = ObjectId(2);
    let file = || "T0.toy".to_string();
    vec![
        TraceEvent::new(
            1,
            EventPayload::Alloc {
                obj: o1,
                klass: "A".into(),
                alloc_site_file: file(),
                alloc_site_line: 1,
            },
        ),
        TraceEvent::new(
            2,
            EventPayload::MethodEnter {
                callee: o1,
                klass: "A".into(),
                method: INIT.into(),
            },
        ),
        TraceEvent::new(
            3,
            EventPayload::Alloc {
                obj: o2,
                klass: "B".into(),
                alloc_site_file: file(),
                alloc_site_line: 2,
            },
        ),
        TraceEvent::new(
            4,
            EventPayload::FieldStore {
                caller: o1,
                field: "f".into(),
                oldval: ObjectId::NULL,
                newval: o2,
                callsite_file: file(),
                callsite_line: 3,
            },
        ),
        TraceEvent::new(
            5,
            EventPayload::MethodExit {
                callee: o1,
                klass: "A".into(),
                method: INIT.into(),
            },
        ),
        TraceEvent::new(
            6,
            EventPayload::FieldLoad {
                caller: o1,
                field: "f".into(),
                value: o2,
            },
        ),
        TraceEvent::new(
            7,
            EventPayload::FieldStore {
                caller: o1,
                field: "f".into(),
                oldval: o2,
                newval: ObjectId::NULL,
                callsite_file: file(),
                callsite_line: 4,
            },
        ),
    ]
}

const CHAR_CELLS: usize = 3;

/// Strings wrapping character arrays that are filled before being read,
/// plus buffers whose array ends up shared by two strings.
fn string_like(seed: u64) -> ToyProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<String> = (0..CHAR_CELLS).map(|i| format!("[{i}]")).collect();
    let cell_refs: Vec<&str> = cells.iter().map(String::as_str).collect();
    let classes = vec![
        ClassDecl::new("Chr", &[]),
        ClassDecl::new("CharArr", &cell_refs),
        ClassDecl::new("Str", &["value"]),
        ClassDecl::new("StrBuffer", &["value"]),
    ];

    let fill = |array: &str| {
        let mut body = vec![Stmt::new("CharArr", array), Stmt::new("Chr", "c")];
        for cell in &cells {
            body.push(Stmt::store_field(array, cell, "c"));
        }
        body.push(Stmt::store_field(THIS, "value", array));
        body
    };
    let mut hash = vec![Stmt::load_field(THIS, "value", "v")];
    for cell in &cells {
        hash.push(Stmt::load_field("v", cell, "h"));
    }

    let procedures = vec![
        Procedure::method("Str", INIT, fill("a")),
        Procedure::method("Str", "hashCode", hash),
        Procedure::method("StrBuffer", INIT, fill("buf")),
    ];

    let mut main = Vec::new();
    let plain = rng.random_range(3..=8);
    for i in 0..plain {
        let s = format!("s{i}");
        main.push(Stmt::new("Str", &s));
        main.push(Stmt::call(&s, "hashCode"));
        if rng.random_bool(0.5) {
            main.push(Stmt::call(&s, "hashCode"));
        }
    }
    let buffers = rng.random_range(1..=3);
    for b in 0..buffers {
        let sb = format!("sb{b}");
        let shared = format!("shared{b}");
        main.push(Stmt::new("StrBuffer", &sb));
        main.push(Stmt::load_field(&sb, "value", &shared));
        for k in 0..2 {
            let t = format!("t{b}_{k}");
            main.push(Stmt::new("Str", &t));
            main.push(Stmt::store_field(&t, "value", &shared));
        }
        for k in 0..2 {
            main.push(Stmt::call(&format!("t{b}_{k}"), "hashCode"));
        }
    }
    ToyProgram {
        file: "Strings.toy".into(),
        ..ToyProgram::new(classes, vec_with_main(procedures, main))
    }
}

/// A doubly linked list built by appending nodes, then traversed.
fn linkedlist_like(seed: u64) -> ToyProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = vec![
        ClassDecl::new("List", &["head", "tail"]),
        ClassDecl::new("Node", &["prev", "next", "item"]),
        ClassDecl::new("Item", &[]),
    ];
    let walk = vec![
        Stmt::load_field(THIS, "head", "cur"),
        Stmt::load_field("cur", "next", "cur"),
        Stmt::Return,
    ];
    let procedures = vec![Procedure::method("List", "peekSecond", walk)];

    let n = rng.random_range(2..=10);
    let mut main = vec![Stmt::new("List", "l")];
    for k in 0..n {
        main.push(Stmt::new("Node", "x"));
        main.push(Stmt::new("Item", "it"));
        main.push(Stmt::store_field("x", "item", "it"));
        if k == 0 {
            main.push(Stmt::store_field("l", "head", "x"));
        } else {
            main.push(Stmt::load_field("l", "tail", "t"));
            main.push(Stmt::store_field("t", "next", "x"));
            main.push(Stmt::store_field("x", "prev", "t"));
        }
        main.push(Stmt::store_field("l", "tail", "x"));
    }
    main.push(Stmt::load_field("l", "head", "cur"));
    main.push(Stmt::store_var("p", "cur"));
    for _ in 1..n {
        main.push(Stmt::load_field("cur", "next", "cur"));
        main.push(Stmt::load_field("cur", "item", "i"));
        main.push(Stmt::store_var("p", "cur"));
    }
    main.push(Stmt::call("l", "peekSecond"));
    ToyProgram {
        file: "List.toy".into(),
        ..ToyProgram::new(classes, vec_with_main(procedures, main))
    }
}

fn vec_with_main(mut procedures: Vec<Procedure>, main: Vec<Stmt>) -> Vec<Procedure> {
    procedures.push(Procedure::main(main));
    procedures
}

/// Upper bound on (events, allocations) a procedure body can emit.
/// Bodies only allocate classes with a lower index than their owner, so
/// the recursion terminates.
fn body_cost(program: &ToyProgram, class: &str, method: &str) -> (usize, usize) {
    let Some(p) = program.find_procedure(class, method) else {
        return (0, 0);
    };
    let proc_ = &program.procedures[p];
    let owner = proc_.class.as_deref().unwrap_or(class);
    let mut vars: HashMap<&str, &str> = HashMap::new();
    vars.insert(THIS, owner);
    let mut total = (0, 0);
    for stmt in &proc_.body {
        let (e, a) = match stmt {
            Stmt::New { klass, target } => {
                vars.insert(target, klass);
                let (e, a) = body_cost(program, klass, INIT);
                (3 + e, 1 + a)
            }
            Stmt::StoreField { .. } | Stmt::LoadField { .. } => (1, 0),
            Stmt::StoreVar { .. } => (2, 0),
            Stmt::Call { obj, method } => {
                let k = vars.get(obj.as_str()).copied().unwrap_or(owner);
                let (e, a) = body_cost(program, k, method);
                (2 + e, a)
            }
            Stmt::Return => (0, 0),
        };
        total.0 += e;
        total.1 += a;
    }
    total
}

/// Seeded random program bounded by `params`. Generation tracks the
/// interpreter's state so every statement is valid when executed.
fn random_soup(seed: u64, params: SoupParams) -> ToyProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_count = rng.random_range(3..=6);
    let mut classes: Vec<ClassDecl> = (0..class_count)
        .map(|i| {
            let nfields = rng.random_range(1..=3);
            ClassDecl {
                name: format!("C{i}"),
                fields: (0..nfields).map(|f| format!("f{f}")).collect(),
            }
        })
        .collect();
    classes.push(ClassDecl::new("Arr", &["[0]", "[1]", "[2]", "[3]"]));

    let mut procedures = Vec::new();
    for (i, class) in classes.iter().enumerate() {
        if class.name == "Arr" {
            continue;
        }
        let field = |rng: &mut ChaCha8Rng| class.fields.choose(rng).unwrap().clone();
        if rng.random_bool(0.5) {
            // Constructor writes, optionally to a fresh child of a simpler class.
            let mut body = Vec::new();
            if i > 0 && rng.random_bool(0.6) {
                let child = &classes[rng.random_range(0..i)].name;
                body.push(Stmt::new(child, "child"));
                body.push(Stmt::store_field(THIS, &field(&mut rng), "child"));
            } else {
                body.push(Stmt::store_field(THIS, &field(&mut rng), THIS));
            }
            procedures.push(Procedure::method(&class.name, INIT, body));
        }
        if rng.random_bool(0.7) {
            let mut body = Vec::new();
            let mut locals: Vec<String> = Vec::new();
            for _ in 0..rng.random_range(1..=4) {
                match rng.random_range(0..4) {
                    0 => {
                        let target = format!("l{}", locals.len());
                        body.push(Stmt::load_field(THIS, &field(&mut rng), &target));
                        locals.push(target);
                    }
                    1 if i > 0 => {
                        let target = format!("l{}", locals.len());
                        let child = &classes[rng.random_range(0..i)].name;
                        body.push(Stmt::new(child, &target));
                        body.push(Stmt::store_field(THIS, &field(&mut rng), &target));
                        locals.push(target);
                    }
                    2 if !locals.is_empty() => {
                        let src = locals.choose(&mut rng).unwrap().clone();
                        body.push(Stmt::store_var("alias", &src));
                    }
                    _ => {
                        let value = locals
                            .choose(&mut rng)
                            .cloned()
                            .unwrap_or_else(|| THIS.to_string());
                        body.push(Stmt::store_field(THIS, &field(&mut rng), &value));
                    }
                }
            }
            procedures.push(Procedure::method(&class.name, "touch", body));
        }
    }

    let mut program = ToyProgram::new(classes, procedures);
    program.file = "Soup.toy".into();
    program.procedures.push(Procedure::main(Vec::new()));
    let main = program.procedures.len() - 1;

    // Grows main one statement at a time; main is listed last.
    let mut body = Vec::new();
    {
        let mut machine = Machine::new(&program);
        let mut frame = Frame::new(main, ObjectId::NULL, STATIC_CLASS, &program)
            .expect("empty main has no variables");
        let mut var_names = 0usize;
        let mut failures = 0;
        while failures < 64 {
            let mut vars: Vec<(&String, ObjectId)> =
                frame.vars.iter().map(|(k, v)| (k, *v)).collect();
            vars.sort();
            let live: Vec<(&String, ObjectId)> =
                vars.iter().copied().filter(|(_, v)| !v.is_null()).collect();
            let choice = if live.is_empty() {
                0
            } else {
                rng.random_range(0..10)
            };
            let mut pick_target = |rng: &mut ChaCha8Rng| {
                if vars.is_empty() || (vars.len() < 12 && rng.random_bool(0.3)) {
                    var_names += 1;
                    format!("v{}", var_names - 1)
                } else {
                    vars.choose(rng).unwrap().0.clone()
                }
            };
            let stmt = match choice {
                0..=2 => {
                    let klass = program.classes.choose(&mut rng).unwrap().name.clone();
                    Stmt::New {
                        klass,
                        target: pick_target(&mut rng),
                    }
                }
                3..=7 => {
                    let (obj, o) = *live.choose(&mut rng).unwrap();
                    let decl = program.class(machine.class_of(o)).unwrap();
                    let field = decl.fields.choose(&mut rng).unwrap().clone();
                    if choice <= 5 {
                        let value = vars.choose(&mut rng).unwrap().0.clone();
                        Stmt::StoreField {
                            obj: obj.clone(),
                            field,
                            value,
                        }
                    } else {
                        Stmt::LoadField {
                            obj: obj.clone(),
                            field,
                            target: pick_target(&mut rng),
                        }
                    }
                }
                8 => {
                    let source = vars.choose(&mut rng).unwrap().0.clone();
                    Stmt::StoreVar {
                        target: pick_target(&mut rng),
                        source,
                    }
                }
                _ => {
                    let (obj, o) = *live.choose(&mut rng).unwrap();
                    if program
                        .find_procedure(machine.class_of(o), "touch")
                        .is_none()
                    {
                        failures += 1;
                        continue;
                    }
                    Stmt::call(obj, "touch")
                }
            };

            let (cost_events, cost_objects) = match &stmt {
                Stmt::New { klass, .. } => {
                    let (e, a) = body_cost(&program, klass, INIT);
                    (3 + e, 1 + a)
                }
                Stmt::StoreVar { .. } => (2, 0),
                Stmt::Call { obj, method } => {
                    let o = frame.vars[obj.as_str()];
                    let (e, a) = body_cost(&program, machine.class_of(o), method);
                    (2 + e, a)
                }
                _ => (1, 0),
            };
            if machine.events.len() + cost_events > params.events
                || machine.classes.len() + cost_objects > params.objects
            {
                failures += 1;
                continue;
            }
            failures = 0;
            let index = body.len();
            frame
                .assign_slots(&stmt, index)
                .expect("at most 13 main variables");
            machine
                .exec(&stmt, index, &mut frame, 0)
                .expect("generated statement is valid");
            body.push(stmt);
        }
    }
    program.procedures[main].body = body;
    program
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(events: &[TraceEvent]) -> Vec<crate::trace::EventKind> {
        events.iter().map(|e| e.kind()).collect()
    }

    #[test]
    fn minimal_program_emits_alloc_and_init_frame() {
        use crate::trace::EventKind::*;
        let p = ToyProgram::from_main(vec![ClassDecl::new("A", &[])], vec![Stmt::new("A", "x")]);
        let events = run_program(&p).unwrap();
        assert_eq!(kinds(&events), vec![Alloc, MethodEnter, MethodExit]);
        assert_eq!(
            events[1].payload,
            EventPayload::MethodEnter {
                callee: ObjectId(1),
                klass: "A".into(),
                method: INIT.into()
            }
        );
        assert_eq!(
            events.iter().map(|e| e.time.0).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn store_field_is_last_event() {
        let p = ToyProgram::from_main(
            vec![ClassDecl::new("A", &["f"]), ClassDecl::new("B", &[])],
            vec![
                Stmt::new("A", "x"),
                Stmt::new("B", "y"),
                Stmt::store_field("x", "f", "y"),
            ],
        );
        let events = run_program(&p).unwrap();
        match &events.last().unwrap().payload {
            EventPayload::FieldStore {
                caller,
                field,
                oldval,
                newval,
                ..
            } => {
                assert_eq!((*caller, field.as_str()), (ObjectId(1), "f"));
                assert_eq!((*oldval, *newval), (ObjectId::NULL, ObjectId(2)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn second_store_chains_oldval() {
        let p = ToyProgram::from_main(
            vec![ClassDecl::new("A", &["f"])],
            vec![
                Stmt::new("A", "x"),
                Stmt::new("A", "y"),
                Stmt::new("A", "z"),
                Stmt::store_field("x", "f", "y"),
                Stmt::store_field("x", "f", "z"),
            ],
        );
        let events = run_program(&p).unwrap();
        match &events.last().unwrap().payload {
            EventPayload::FieldStore { oldval, newval, .. } => {
                assert_eq!((*oldval, *newval), (ObjectId(2), ObjectId(3)))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unassigned_variable_names_statement() {
        let p = ToyProgram::from_main(
            vec![ClassDecl::new("A", &["f"])],
            vec![Stmt::new("A", "x"), Stmt::store_field("x", "f", "nope")],
        );
        let err = run_program(&p).unwrap_err();
        assert_eq!(err.stmt, 1);
        assert_eq!(err.kind, InterpErrorKind::UnassignedVariable("nope".into()));
    }

    #[test]
    fn undeclared_class_and_field_rejected() {
        let p = ToyProgram::from_main(vec![], vec![Stmt::new("A", "x")]);
        assert_eq!(
            run_program(&p).unwrap_err().kind,
            InterpErrorKind::UnknownClass("A".into())
        );
        let p = ToyProgram::from_main(
            vec![ClassDecl::new("A", &[])],
            vec![Stmt::new("A", "x"), Stmt::store_field("x", "g", "x")],
        );
        assert!(matches!(
            run_program(&p).unwrap_err().kind,
            InterpErrorKind::UnknownField { .. }
        ));
    }

    #[test]
    fn unbounded_recursion_is_an_error() {
        let p = ToyProgram::new(
            vec![ClassDecl::new("A", &[])],
            vec![
                Procedure::method("A", "loop", vec![Stmt::call(THIS, "loop")]),
                Procedure::main(vec![Stmt::new("A", "x"), Stmt::call("x", "loop")]),
            ],
        );
        assert_eq!(
            run_program(&p).unwrap_err().kind,
            InterpErrorKind::CallDepthExceeded(MAX_CALL_DEPTH)
        );
    }

    #[test]
    fn var_events_carry_frame_identity() {
        let p = ToyProgram::new(
            vec![ClassDecl::new("A", &[])],
            vec![
                Procedure::method("A", "m", vec![Stmt::store_var("y", THIS)]),
                Procedure::main(vec![Stmt::new("A", "x"), Stmt::call("x", "m")]),
            ],
        );
        let events = run_program(&p).unwrap();
        let store = events
            .iter()
            .find(|e| matches!(e.payload, EventPayload::VarStore { .. }))
            .unwrap();
        assert_eq!(
            store.payload,
            EventPayload::VarStore {
                caller_method: "m".into(),
                caller_class: "A".into(),
                caller_tag: ObjectId(1),
                var: 1,
                oldval: ObjectId::NULL,
                newval: ObjectId(1),
            }
        );
    }

    #[test]
    fn return_stops_body() {
        let p = ToyProgram::from_main(
            vec![ClassDecl::new("A", &[])],
            vec![Stmt::new("A", "x"), Stmt::Return, Stmt::new("A", "y")],
        );
        assert_eq!(run_program(&p).unwrap().len(), 3);
    }

    #[test]
    fn allocation_lines_match_source_listing() {
        let p = linkedlist_like(3);
        let source = p.to_source();
        let lines: Vec<&str> = source.lines().collect();
        for e in run_program(&p).unwrap() {
            if let EventPayload::Alloc {
                klass,
                alloc_site_line,
                ..
            } = &e.payload
            {
                let text = lines[*alloc_site_line as usize - 1];
                assert!(text.contains(&format!("new {klass}")), "{text}");
            }
        }
    }

    #[test]
    fn t0_scenario_has_seven_events() {
        let trace = builtin_scenario("t0-minimal", 42).unwrap();
        assert_eq!(trace.events, t0_events());
        assert_eq!(trace.events.len(), 7);
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(
            builtin_scenario("nope", 0),
            Err(ScenarioError::UnknownScenario(_))
        ));
    }

    #[test]
    fn soup_respects_limits_and_is_deterministic() {
        for seed in 0..20 {
            let a = builtin_scenario("random-soup", seed).unwrap();
            let b = builtin_scenario("random-soup", seed).unwrap();
            assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
            assert!(
                a.events.len() <= 500 && a.events.len() > 100,
                "{}",
                a.events.len()
            );
            let allocs = a
                .events
                .iter()
                .filter(|e| matches!(e.payload, EventPayload::Alloc { .. }))
                .count();
            assert!(allocs <= 50 && allocs > 0);
        }
    }

    #[test]
    fn soup_program_reproduces_its_trace() {
        let s = Scenario::builtin("random-soup", 7, SoupParams::default()).unwrap();
        let replay = run_program(s.program.as_ref().unwrap()).unwrap();
        assert_eq!(replay, s.trace.events);
    }
}
