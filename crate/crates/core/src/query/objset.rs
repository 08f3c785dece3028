use fixedbitset::FixedBitSet;

use crate::store::DatasetStore;
use crate::trace::ObjectId;

/// Selection over a store's dense object indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjSet {
    bits: FixedBitSet,
}

impl ObjSet {
    pub fn empty(universe: usize) -> Self {
        ObjSet {
            bits: FixedBitSet::with_capacity(universe),
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        bits.insert_range(..);
        ObjSet { bits }
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = ObjSet::empty(universe);
        for i in indices {
            set.insert(i);
        }
        set
    }

    /// Maps ids through the store; `None` if any id is absent.
    pub fn from_ids(store: &DatasetStore, ids: impl IntoIterator<Item = ObjectId>) -> Option<Self> {
        let mut set = ObjSet::empty(store.objects().len());
        for id in ids {
            set.insert(store.dense_index(id)?);
        }
        Some(set)
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.bits.contains(index)
    }

    pub fn insert(&mut self, index: usize) -> bool {
        !self.bits.put(index)
    }

    pub fn remove(&mut self, index: usize) {
        self.bits.set(index, false);
    }

    pub fn union_with(&mut self, other: &ObjSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &ObjSet) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &ObjSet) {
        self.bits.difference_with(&other.bits);
    }

    pub fn complement(&self) -> ObjSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        ObjSet { bits }
    }

    pub fn is_subset(&self, other: &ObjSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    /// Ids in ascending order.
    pub fn to_ids(&self, store: &DatasetStore) -> Vec<ObjectId> {
        let objects = store.objects();
        self.iter().map(|i| objects[i].id).collect()
    }
}
