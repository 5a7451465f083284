//! Canonical constraint layouts on a ring, and the interaction clusters of
//! a Hamiltonian.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::hamiltonian::LocalHamiltonian;
use crate::qubits::QubitSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pattern {
    /// Three-site windows starting at every even site.
    A,
    /// Per six sites: `{0,1,2}`, `{2,3,4}`, `{3,4,5}`, `{5,6}`.
    B,
    /// Per three sites: `{0,1,2}`, `{2,3}`.
    C,
    /// Every nearest-neighbour pair.
    D,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::A, Pattern::B, Pattern::C, Pattern::D];

    /// Sites per repetition of the motif.
    pub fn period(self) -> usize {
        match self {
            Pattern::A => 2,
            Pattern::B => 6,
            Pattern::C => 3,
            Pattern::D => 1,
        }
    }

    /// The layout on a ring of `n` sites. `n` must be a multiple of the period.
    pub fn constraint_set(self, n: usize) -> Result<ConstraintSet> {
        let period = self.period();
        if n < 3 || !n.is_multiple_of(period) {
            return Err(Error::MalformedProblem(alloc::format!(
                "pattern {self} needs a ring whose size is a multiple of {period}, got {n}"
            )));
        }
        let w = |start: usize, len: usize| QubitSet::window(start, len, n);
        let mut sets = Vec::new();
        for k in 0..n / period {
            let o = k * period;
            match self {
                Pattern::A => sets.push(w(o, 3)),
                Pattern::B => {
                    sets.push(w(o, 3));
                    sets.push(w(o + 2, 3));
                    sets.push(w(o + 3, 3));
                    sets.push(w(o + 5, 2));
                }
                Pattern::C => {
                    sets.push(w(o, 3));
                    sets.push(w(o + 2, 2));
                }
                Pattern::D => sets.push(w(o, 2)),
            }
        }
        ConstraintSet::new(n, sets)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pattern::A => "a",
            Pattern::B => "b",
            Pattern::C => "c",
            Pattern::D => "d",
        };
        f.write_str(s)
    }
}

/// Connected clusters of qubits linked by multi-site terms. Isolated
/// qubits are left out.
pub fn interaction_components(h: &LocalHamiltonian) -> Vec<QubitSet> {
    let n = h.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in h.terms() {
        let s = t.support();
        if s.len() < 2 {
            continue;
        }
        let mut it = s.iter();
        let first = it.next().unwrap_or(0);
        for q in it {
            let (a, b) = (find(&mut parent, first), find(&mut parent, q));
            parent[a] = b;
        }
    }
    let mut groups: Vec<QubitSet> = Vec::new();
    let mut root_of: Vec<Option<usize>> = alloc::vec![None; n];
    for q in 0..n {
        let r = find(&mut parent, q);
        match root_of[r] {
            Some(g) => groups[g].insert(q),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(QubitSet::singleton(q));
            }
        }
    }
    let mut out: Vec<QubitSet> = groups.into_iter().filter(|g| g.len() >= 2).collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::cost;
    use crate::hamiltonian::triplet_xx;

    #[test]
    fn six_site_costs() {
        let costs: Vec<u64> = Pattern::ALL
            .iter()
            .map(|p| cost(&p.constraint_set(6).unwrap()))
            .collect();
        assert_eq!(costs, alloc::vec![189, 204, 156, 90]);
        assert_eq!(
            Pattern::B.constraint_set(6).unwrap().to_string(),
            "[[0,5],[0,1,2],[2,3,4],[3,4,5]]"
        );
        assert!(Pattern::B.constraint_set(8).is_err());
    }

    #[test]
    fn twelve_site_patterns_repeat() {
        assert_eq!(Pattern::C.constraint_set(12).unwrap().len(), 8);
        assert_eq!(Pattern::A.constraint_set(12).unwrap().len(), 6);
    }

    #[test]
    fn triplet_model_clusters() {
        let h = triplet_xx(6, 1.0).unwrap();
        let groups: Vec<Vec<usize>> = interaction_components(&h).iter().map(|g| g.to_vec()).collect();
        assert_eq!(groups, alloc::vec![alloc::vec![0, 4, 5], alloc::vec![1, 2, 3]]);
        let h = triplet_xx(10, 1.0).unwrap();
        assert_eq!(interaction_components(&h).len(), 3);
    }
}
