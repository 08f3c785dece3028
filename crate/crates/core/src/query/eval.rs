use std::time::Instant;

use serde::Serialize;

use super::ast::{canonical_form, Primitive, QueryExpr, Unary};
use super::cache::{CacheError, CacheOutcome, QueryCache};
use super::objset::ObjSet;
use crate::store::{Access, DatasetStore, EdgeKind};
use crate::trace::ObjectId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionResult {
    pub dataset: String,
    pub canonical_query: String,
    /// Ascending, duplicate-free.
    pub objects: Vec<ObjectId>,
    pub from_cache: bool,
    pub compute_millis: u64,
}

pub fn evaluate(
    store: &DatasetStore,
    q: &QueryExpr,
    cache: &QueryCache,
) -> Result<SelectionResult, CacheError> {
    let started = Instant::now();
    let (canonical, text) = canonical_form(q);
    let outcome = eval_canonical(store, &canonical, cache)?;
    Ok(SelectionResult {
        dataset: store.name().to_string(),
        canonical_query: text,
        objects: outcome.set.to_ids(store),
        from_cache: outcome.from_cache,
        compute_millis: started.elapsed().as_millis() as u64,
    })
}

/// Like [`evaluate`] but returns the dense set without materialising ids.
pub fn evaluate_set(
    store: &DatasetStore,
    q: &QueryExpr,
    cache: &QueryCache,
) -> Result<CacheOutcome, CacheError> {
    eval_canonical(store, &canonical_form(q).0, cache)
}

/// `q` must already be canonical, so its printed form is its cache key.
fn eval_canonical(
    store: &DatasetStore,
    q: &QueryExpr,
    cache: &QueryCache,
) -> Result<CacheOutcome, CacheError> {
    cache.get_or_compute(store, &q.to_string(), || compute(store, q, cache))
}

fn compute(store: &DatasetStore, q: &QueryExpr, cache: &QueryCache) -> Result<ObjSet, CacheError> {
    let n = store.objects().len();
    Ok(match q {
        QueryExpr::Primitive(p) => primitive(store, *p),
        QueryExpr::InstanceOf(class) => ObjSet::from_indices(
            n,
            store
                .objects()
                .iter()
                .enumerate()
                .filter(|(_, o)| &o.klass == class)
                .map(|(i, _)| i),
        ),
        QueryExpr::Unary(op, inner) => {
            let inner = eval_canonical(store, inner, cache)?.set;
            unary(store, *op, &inner)
        }
        QueryExpr::And(children) => {
            let mut acc = ObjSet::full(n);
            for child in children {
                acc.intersect_with(&eval_canonical(store, child, cache)?.set);
            }
            acc
        }
        QueryExpr::Or(children) => {
            let mut acc = ObjSet::empty(n);
            for child in children {
                acc.union_with(&eval_canonical(store, child, cache)?.set);
            }
            acc
        }
    })
}

fn primitive(store: &DatasetStore, p: Primitive) -> ObjSet {
    let objects = store.objects();
    let n = objects.len();
    let adj = &store.adjacency;
    let select =
        |pred: &dyn Fn(usize) -> bool| ObjSet::from_indices(n, (0..n).filter(|&i| pred(i)));
    match p {
        Primitive::Obj => ObjSet::full(n),
        Primitive::MutableObj => mutable(store),
        Primitive::ImmutableObj => mutable(store).complement(),
        Primitive::StationaryObj => {
            let mut set = ObjSet::full(n);
            for (id, fields) in store.field_log() {
                let stationary = fields.values().all(|accesses| {
                    match accesses.iter().position(|a| a.access == Access::Read) {
                        Some(first_read) => {
                            let t = accesses[first_read].time;
                            !accesses[first_read..]
                                .iter()
                                .any(|a| a.access == Access::Write && a.time > t)
                        }
                        None => true,
                    }
                });
                if !stationary {
                    if let Some(i) = store.dense_index(*id) {
                        set.remove(i);
                    }
                }
            }
            set
        }
        Primitive::TinyObj => select(&|i| adj.out_field[i].is_empty()),
        Primitive::StackBoundObj => select(&|i| adj.in_field[i].is_empty()),
        Primitive::UniqueObj => select(&|i| never_aliased(store, objects[i].id, None)),
        Primitive::HeapUniqueObj => {
            select(&|i| never_aliased(store, objects[i].id, Some(EdgeKind::Field)))
        }
        Primitive::AgeOrderedObj => select(&|i| {
            adj.out_field[i]
                .iter()
                .all(|&t| objects[i].firstusage > objects[t as usize].firstusage)
        }),
        Primitive::ReverseAgeOrderedObj => select(&|i| {
            adj.out_field[i]
                .iter()
                .all(|&t| objects[i].firstusage < objects[t as usize].firstusage)
        }),
    }
}

fn mutable(store: &DatasetStore) -> ObjSet {
    let mut set = ObjSet::empty(store.objects().len());
    for (id, fields) in store.field_log() {
        let Some(i) = store.dense_index(*id) else {
            continue;
        };
        let end = store.objects()[i].construction_end;
        if fields
            .values()
            .flatten()
            .any(|a| a.access == Access::Write && a.time > end)
        {
            set.insert(i);
        }
    }
    set
}

/// No two incoming edges overlap in time (half-open intervals).
fn never_aliased(store: &DatasetStore, id: ObjectId, kind: Option<EdgeKind>) -> bool {
    let mut intervals: Vec<_> = store
        .edges_to(id)
        .filter(|e| kind.is_none_or(|k| e.kind == k))
        .map(|e| (e.start, e.end))
        .collect();
    intervals.sort_unstable();
    let mut reach = None;
    for (start, end) in intervals {
        if reach.is_some_and(|r| start < r) {
            return false;
        }
        reach = reach.max(Some(end));
    }
    true
}

fn unary(store: &DatasetStore, op: Unary, q: &ObjSet) -> ObjSet {
    let adj = &store.adjacency;
    let (out, inc) = if op.heap_only() {
        (&adj.out_field, &adj.in_field)
    } else {
        (&adj.out_any, &adj.in_any)
    };
    match op {
        Unary::Not => q.complement(),
        Unary::RefersTo | Unary::HeapRefersTo => step(q, inc),
        Unary::ReferredFrom | Unary::HeapReferredFrom => step(q, out),
        Unary::ReachableFrom | Unary::HeapReachableFrom => closure(q, out),
        Unary::CanReach | Unary::CanHeapReach => closure(q, inc),
        Unary::Deeply | Unary::HeapDeeply => {
            let mut set = q.clone();
            set.difference_with(&closure(&q.complement(), inc));
            set
        }
    }
}

/// Neighbours of members of `q` along `adj`.
fn step(q: &ObjSet, adj: &[Vec<u32>]) -> ObjSet {
    let mut set = ObjSet::empty(q.universe());
    for i in q.iter() {
        for &j in &adj[i] {
            set.insert(j as usize);
        }
    }
    set
}

/// Least superset of `q` closed under `adj`.
fn closure(q: &ObjSet, adj: &[Vec<u32>]) -> ObjSet {
    let mut set = q.clone();
    let mut stack: Vec<usize> = q.iter().collect();
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if set.insert(j as usize) {
                stack.push(j as usize);
            }
        }
    }
    set
}
