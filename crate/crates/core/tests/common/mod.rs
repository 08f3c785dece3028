#![allow(dead_code)]

use std::collections::BTreeSet;

use heapscope_core::query::{evaluate, QueryCache, QueryExpr};
use heapscope_core::store::{ingest, DatasetStore};
use heapscope_core::trace::ObjectId;
use heapscope_core::tracegen::{Scenario, SoupParams};

pub fn soup(seed: u64) -> DatasetStore {
    let scenario = Scenario::builtin("random-soup", seed, SoupParams::default()).unwrap();
    ingest(&scenario.trace, &format!("soup-{seed}")).unwrap()
}

pub fn classes(store: &DatasetStore) -> Vec<String> {
    let set: BTreeSet<String> = store.objects().iter().map(|o| o.klass.clone()).collect();
    set.into_iter().collect()
}

pub fn eval(store: &DatasetStore, q: &QueryExpr, cache: &QueryCache) -> BTreeSet<ObjectId> {
    evaluate(store, q, cache)
        .unwrap()
        .objects
        .into_iter()
        .collect()
}
