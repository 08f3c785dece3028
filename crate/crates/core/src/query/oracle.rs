//! Reference evaluator: direct scans over the store tables with no
//! indexes, no cache, and naive fixpoints. Meant for small stores in tests.

use std::collections::BTreeSet;

use super::ast::{Primitive, QueryExpr, Unary};
use crate::store::{Access, DatasetStore, EdgeKind, RefEdge};
use crate::trace::ObjectId;

pub fn brute_force_oracle(store: &DatasetStore, q: &QueryExpr) -> BTreeSet<ObjectId> {
    let all: BTreeSet<ObjectId> = store.objects().iter().map(|o| o.id).collect();
    match q {
        QueryExpr::Primitive(p) => primitive(store, *p),
        QueryExpr::InstanceOf(c) => store
            .objects()
            .iter()
            .filter(|o| &o.klass == c)
            .map(|o| o.id)
            .collect(),
        QueryExpr::Unary(Unary::Not, inner) => {
            let inner = brute_force_oracle(store, inner);
            all.difference(&inner).copied().collect()
        }
        QueryExpr::Unary(op, inner) => {
            let inner = brute_force_oracle(store, inner);
            combinator(store, *op, &inner)
        }
        QueryExpr::And(qs) => {
            let mut acc = all;
            for q in qs {
                let s = brute_force_oracle(store, q);
                acc.retain(|o| s.contains(o));
            }
            acc
        }
        QueryExpr::Or(qs) => qs
            .iter()
            .flat_map(|q| brute_force_oracle(store, q))
            .collect(),
    }
}

fn edges_of(store: &DatasetStore, heap_only: bool) -> impl Iterator<Item = &RefEdge> {
    store
        .edges()
        .iter()
        .filter(move |e| !heap_only || e.kind == EdgeKind::Field)
}

fn primitive(store: &DatasetStore, p: Primitive) -> BTreeSet<ObjectId> {
    let keep = |pred: &dyn Fn(ObjectId) -> bool| -> BTreeSet<ObjectId> {
        store
            .objects()
            .iter()
            .map(|o| o.id)
            .filter(|&id| pred(id))
            .collect()
    };
    let first = |id: ObjectId| store.object(id).map(|o| o.firstusage);
    match p {
        Primitive::Obj => keep(&|_| true),
        Primitive::MutableObj => keep(&|id| is_mutable(store, id)),
        Primitive::ImmutableObj => keep(&|id| !is_mutable(store, id)),
        Primitive::StationaryObj => keep(&|id| {
            let Some(fields) = store.field_accesses(id) else {
                return true;
            };
            fields.values().all(|accesses| {
                accesses.iter().all(|read| {
                    read.access != Access::Read
                        || accesses
                            .iter()
                            .all(|w| w.access != Access::Write || w.time <= read.time)
                })
            })
        }),
        Primitive::TinyObj => keep(&|id| !edges_of(store, true).any(|e| e.source == id)),
        Primitive::StackBoundObj => keep(&|id| !edges_of(store, true).any(|e| e.target == id)),
        Primitive::UniqueObj => keep(&|id| !aliased(store, id, false)),
        Primitive::HeapUniqueObj => keep(&|id| !aliased(store, id, true)),
        Primitive::AgeOrderedObj => keep(&|id| {
            edges_of(store, true)
                .filter(|e| e.source == id)
                .all(|e| first(id) > first(e.target))
        }),
        Primitive::ReverseAgeOrderedObj => keep(&|id| {
            edges_of(store, true)
                .filter(|e| e.source == id)
                .all(|e| first(id) < first(e.target))
        }),
    }
}

fn is_mutable(store: &DatasetStore, id: ObjectId) -> bool {
    let Some(o) = store.object(id) else {
        return false;
    };
    store.field_accesses(id).is_some_and(|fields| {
        fields
            .values()
            .flatten()
            .any(|a| a.access == Access::Write && a.time > o.construction_end)
    })
}

fn aliased(store: &DatasetStore, id: ObjectId, heap_only: bool) -> bool {
    let incoming: Vec<&RefEdge> = edges_of(store, heap_only)
        .filter(|e| e.target == id)
        .collect();
    incoming
        .iter()
        .enumerate()
        .any(|(i, a)| incoming[i + 1..].iter().any(|b| a.overlaps(b)))
}

fn combinator(store: &DatasetStore, op: Unary, q: &BTreeSet<ObjectId>) -> BTreeSet<ObjectId> {
    let heap = op.heap_only();
    match op {
        Unary::RefersTo | Unary::HeapRefersTo => edges_of(store, heap)
            .filter(|e| !e.source.is_null() && q.contains(&e.target))
            .map(|e| e.source)
            .collect(),
        Unary::ReferredFrom | Unary::HeapReferredFrom => edges_of(store, heap)
            .filter(|e| q.contains(&e.source))
            .map(|e| e.target)
            .collect(),
        Unary::ReachableFrom | Unary::HeapReachableFrom => fixpoint(store, q, heap, false),
        Unary::CanReach | Unary::CanHeapReach => fixpoint(store, q, heap, true),
        Unary::Deeply | Unary::HeapDeeply => q
            .iter()
            .copied()
            .filter(|&o| fixpoint(store, &BTreeSet::from([o]), heap, false).is_subset(q))
            .collect(),
        Unary::Not => unreachable!("handled by the caller"),
    }
}

/// Repeats full edge scans until nothing new is added.
fn fixpoint(
    store: &DatasetStore,
    seed: &BTreeSet<ObjectId>,
    heap_only: bool,
    reverse: bool,
) -> BTreeSet<ObjectId> {
    let mut set = seed.clone();
    loop {
        let mut changed = false;
        for e in edges_of(store, heap_only) {
            let (from, to) = if reverse {
                (e.target, e.source)
            } else {
                (e.source, e.target)
            };
            if set.contains(&from) && !to.is_null() && set.insert(to) {
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}
