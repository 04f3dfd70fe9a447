use std::ops::Range;

use fixedbitset::{Block, FixedBitSet};

use super::atoms::{AtomId, AtomIndex};

const BLOCK_BITS: usize = Block::BITS as usize;

/// A set of ground atoms over a fixed [`AtomIndex`], stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interpretation {
    bits: FixedBitSet,
}

impl Interpretation {
    /// Empty interpretation over a base of `size` atoms.
    pub fn empty(size: usize) -> Self {
        Interpretation {
            bits: FixedBitSet::with_capacity(size),
        }
    }

    pub fn from_ids(size: usize, ids: impl IntoIterator<Item = AtomId>) -> Self {
        let mut out = Self::empty(size);
        for id in ids {
            out.insert(id);
        }
        out
    }

    /// Size of the underlying base (not the number of members).
    pub fn base_size(&self) -> usize {
        self.bits.len()
    }

    /// Returns `true` if the atom was newly added.
    pub fn insert(&mut self, id: AtomId) -> bool {
        !self.bits.put(id.index())
    }

    pub fn remove(&mut self, id: AtomId) -> bool {
        let had = self.bits.contains(id.index());
        self.bits.set(id.index(), false);
        had
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.bits.contains(id.index())
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn union_with(&mut self, other: &Interpretation) {
        self.bits.union_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &Interpretation) {
        self.bits.difference_with(&other.bits);
    }

    pub fn is_superset(&self, other: &Interpretation) -> bool {
        self.bits.is_superset(&other.bits)
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.bits.ones().map(|i| AtomId(i as u32))
    }

    /// Members whose id falls inside `range`, ascending.
    pub fn iter_range(&self, range: Range<usize>) -> RangeOnes<'_> {
        let blocks = self.bits.as_slice();
        let end = range.end.min(self.bits.len());
        let start = range.start.min(end);
        let block = start / BLOCK_BITS;
        let current = if start < end {
            blocks[block] & (Block::MAX << (start % BLOCK_BITS))
        } else {
            0
        };
        RangeOnes {
            blocks,
            block,
            current,
            end,
        }
    }

    /// Atom strings in lexicographic order; the canonical rendering used in
    /// traces and exported state documents.
    pub fn to_strings(&self, index: &AtomIndex) -> Vec<String> {
        let mut out: Vec<String> = self.iter().map(|id| index.display(id).to_string()).collect();
        out.sort();
        out
    }
}

pub struct RangeOnes<'a> {
    blocks: &'a [Block],
    block: usize,
    current: Block,
    end: usize,
}

impl Iterator for RangeOnes<'_> {
    type Item = AtomId;

    fn next(&mut self) -> Option<AtomId> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                let idx = self.block * BLOCK_BITS + bit;
                if idx >= self.end {
                    return None;
                }
                self.current &= self.current - 1;
                return Some(AtomId(idx as u32));
            }
            self.block += 1;
            if self.block * BLOCK_BITS >= self.end || self.block >= self.blocks.len() {
                return None;
            }
            self.current = self.blocks[self.block];
        }
    }
}
