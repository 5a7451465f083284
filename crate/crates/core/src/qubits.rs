//! Qubit index sets packed into a machine word.

use core::cmp::Ordering;
use core::fmt;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Largest number of qubits a [`QubitSet`] can address.
pub const MAX_QUBITS: usize = 64;

/// A set of qubit indices in `0..64`.
///
/// Sets are ordered first by cardinality, then lexicographically on their
/// ascending index lists, which is the canonical order used for candidate
/// pools and constraint sets.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QubitSet(u64);

impl QubitSet {
    pub const EMPTY: QubitSet = QubitSet(0);

    pub const fn from_mask(mask: u64) -> Self {
        QubitSet(mask)
    }

    pub fn singleton(q: usize) -> Self {
        assert!(q < MAX_QUBITS, "qubit index {q} out of range");
        QubitSet(1 << q)
    }

    /// Contiguous window `start, start+1, ..` of `len` sites, wrapping modulo `n`.
    pub fn window(start: usize, len: usize, n: usize) -> Self {
        (0..len).map(|k| (start + k) % n).collect()
    }

    /// All sites `0..n`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_QUBITS);
        if n == MAX_QUBITS {
            QubitSet(u64::MAX)
        } else {
            QubitSet((1u64 << n) - 1)
        }
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, q: usize) -> bool {
        q < MAX_QUBITS && self.0 & (1 << q) != 0
    }

    pub const fn is_subset(self, other: QubitSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn union(self, other: QubitSet) -> QubitSet {
        QubitSet(self.0 | other.0)
    }

    pub const fn intersection(self, other: QubitSet) -> QubitSet {
        QubitSet(self.0 & other.0)
    }

    pub const fn difference(self, other: QubitSet) -> QubitSet {
        QubitSet(self.0 & !other.0)
    }

    /// Largest index plus one, or zero for the empty set.
    pub const fn span(self) -> usize {
        MAX_QUBITS - self.0.leading_zeros() as usize
    }

    pub fn insert(&mut self, q: usize) {
        *self = self.union(QubitSet::singleton(q));
    }

    pub fn remove(&mut self, q: usize) {
        self.0 &= !(1u64 << q);
    }

    /// Ascending qubit indices.
    pub fn iter(self) -> Indices {
        Indices(self.0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Position of `q` within the ascending index list.
    pub fn position(self, q: usize) -> Option<usize> {
        if !self.contains(q) {
            return None;
        }
        let below = self.0 & ((1u64 << q) - 1);
        Some(below.count_ones() as usize)
    }

    /// Every subset of `self`, including the empty set and `self`.
    pub fn subsets(self) -> Subsets {
        Subsets {
            full: self.0,
            next: Some(0),
        }
    }

    /// Subsets of `self` obtained by dropping exactly one element.
    pub fn maximal_proper_subsets(self) -> impl Iterator<Item = QubitSet> {
        self.iter().map(move |q| {
            let mut s = self;
            s.remove(q);
            s
        })
    }
}

impl FromIterator<usize> for QubitSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = QubitSet::EMPTY;
        for q in iter {
            s.insert(q);
        }
        s
    }
}

impl Ord for QubitSet {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.len().cmp(&other.len()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        if self.0 == other.0 {
            return Ordering::Equal;
        }
        // With equal sizes, the set holding the smallest element of the
        // symmetric difference comes first in lexicographic order.
        let lowest = (self.0 ^ other.0).trailing_zeros();
        if self.0 & (1 << lowest) != 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl PartialOrd for QubitSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for QubitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for QubitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, q) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{q}")?;
        }
        f.write_str("]")
    }
}

pub struct Indices(u64);

impl Iterator for Indices {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let q = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(q)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Indices {}

/// Enumerates submasks in increasing numeric order.
pub struct Subsets {
    full: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = QubitSet;

    fn next(&mut self) -> Option<QubitSet> {
        let cur = self.next?;
        self.next = if cur == self.full {
            None
        } else {
            Some((cur.wrapping_sub(self.full)) & self.full)
        };
        Some(QubitSet(cur))
    }
}
