//! The space of constraint sets: which reduced density matrices enter a
//! relaxation, what they cost, and how search actions move between them.
//!
//! A [`ConstraintSet`] stores only subsets of two or more qubits; every
//! qubit not covered by a stored subset carries an implicit one-body
//! marginal. The all-implicit set is the bottom of the poset and the
//! initial state of every search.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubits::QubitSet;

/// Free real parameters of a unit-trace Hermitian matrix on `k` qubits.
pub const fn marginal_cost(k: usize) -> u64 {
    (1u64 << (2 * k)) - 1
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintSet {
    n: usize,
    subsets: BTreeSet<QubitSet>,
}

impl ConstraintSet {
    /// The bottom element: only implicit one-body marginals.
    pub fn minimal(n: usize) -> Self {
        ConstraintSet {
            n,
            subsets: BTreeSet::new(),
        }
    }

    /// Builds a set from explicit subsets. Subsets of fewer than two qubits
    /// are implicit and dropped.
    pub fn new(n: usize, subsets: impl IntoIterator<Item = QubitSet>) -> Result<Self> {
        let mut out = ConstraintSet::minimal(n);
        for s in subsets {
            if s.span() > n {
                return Err(Error::QubitOutOfRange { index: s.span() - 1, n });
            }
            if s.len() >= 2 {
                out.subsets.insert(s);
            }
        }
        Ok(out)
    }

    /// The single block covering all `n` qubits.
    pub fn full(n: usize) -> Self {
        let mut c = ConstraintSet::minimal(n);
        if n >= 2 {
            c.subsets.insert(QubitSet::full(n));
        }
        c
    }

    /// Parses `"[[0,1,2],[2,3]]"`.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let t = text.trim();
        let inner = t
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("expected an outer list, got `{t}`")))?
            .trim();
        let mut subsets = Vec::new();
        let mut rest = inner;
        while !rest.is_empty() {
            let open = rest
                .strip_prefix('[')
                .ok_or_else(|| Error::Parse(format!("expected `[` at `{rest}`")))?;
            let close = open
                .find(']')
                .ok_or_else(|| Error::Parse(String::from("unclosed subset")))?;
            let body = &open[..close];
            let mut s = QubitSet::EMPTY;
            for tok in body.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                let q: usize = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad qubit index `{tok}`")))?;
                if q >= n {
                    return Err(Error::QubitOutOfRange { index: q, n });
                }
                s.insert(q);
            }
            subsets.push(s);
            rest = open[close + 1..].trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
                if rest.is_empty() {
                    return Err(Error::Parse(String::from("trailing comma")));
                }
            } else if !rest.is_empty() {
                return Err(Error::Parse(format!("expected `,` at `{rest}`")));
            }
        }
        ConstraintSet::new(n, subsets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored subsets in canonical order.
    pub fn subsets(&self) -> impl Iterator<Item = QubitSet> + '_ {
        self.subsets.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn contains(&self, s: QubitSet) -> bool {
        self.subsets.contains(&s)
    }

    /// Union of all stored subsets.
    pub fn covered(&self) -> QubitSet {
        self.subsets.iter().fold(QubitSet::EMPTY, |acc, s| acc.union(*s))
    }

    /// True if `s` lies inside some stored subset.
    pub fn covers(&self, s: QubitSet) -> bool {
        self.subsets.iter().any(|t| s.is_subset(*t))
    }

    /// Stored subsets plus the implicit one-body marginals of uncovered qubits.
    pub fn blocks(&self) -> Vec<QubitSet> {
        let covered = self.covered();
        let mut out: Vec<QubitSet> = (0..self.n)
            .filter(|&q| !covered.contains(q))
            .map(QubitSet::singleton)
            .collect();
        out.extend(self.subsets.iter().copied());
        out.sort();
        out
    }

    pub fn is_simplified(&self) -> bool {
        self.subsets
            .iter()
            .all(|s| !self.subsets.iter().any(|t| t != s && s.is_subset(*t)))
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, s) in self.subsets.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConstraintSet(n={}, {self})", self.n)
    }
}

/// Drops every subset contained in another member.
pub fn simplify(c: &ConstraintSet) -> ConstraintSet {
    let subsets = c
        .subsets
        .iter()
        .filter(|s| !c.subsets.iter().any(|t| t != *s && s.is_subset(*t)))
        .copied()
        .collect();
    ConstraintSet { n: c.n, subsets }
}

/// Free-parameter count `p` of the relaxation: `4^|S| - 1` per simplified
/// subset plus 3 for each qubit left with its implicit one-body marginal.
pub fn cost(c: &ConstraintSet) -> u64 {
    let s = simplify(c);
    let uncovered = (c.n - s.covered().len()) as u64;
    s.subsets.iter().map(|t| marginal_cost(t.len())).sum::<u64>() + 3 * uncovered
}

/// `c1 ⪯ c2`: every subset of `c1` sits inside some subset of `c2`.
/// Implicit one-body marginals never break the relation.
pub fn partial_order_leq(c1: &ConstraintSet, c2: &ConstraintSet) -> bool {
    c1.subsets.iter().all(|s| c2.covers(*s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Geometry {
    /// Contiguous windows of an open chain.
    Chain,
    /// Contiguous windows wrapping around a ring.
    Ring,
    /// Every subset of the allowed sizes.
    AllSubsets,
}

/// Named budgets used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetPreset {
    /// Room for half of the three-body windows together with every two-body window.
    HalfThreeBody,
    /// Room for every three-body window.
    AllThreeBody,
    Explicit(u64),
}

impl BudgetPreset {
    pub fn resolve(self, n: usize, geometry: Geometry) -> u64 {
        match self {
            BudgetPreset::Explicit(b) => b,
            BudgetPreset::HalfThreeBody => {
                let threes = subsets_of_size(n, 3, geometry);
                let twos = subsets_of_size(n, 2, geometry);
                let k = (threes.len() / 2).max(1);
                // The first k windows are contiguous, so they absorb the fewest
                // two-body windows and give the most expensive such allocation.
                let c = ConstraintSet {
                    n,
                    subsets: threes.into_iter().take(k).chain(twos).collect(),
                };
                cost(&c)
            }
            BudgetPreset::AllThreeBody => {
                let c = ConstraintSet {
                    n,
                    subsets: subsets_of_size(n, 3, geometry)
                        .into_iter()
                        .chain(subsets_of_size(n, 2, geometry))
                        .collect(),
                };
                cost(&c)
            }
        }
    }
}

/// Allowed subsets of size `k`, ordered by window start (windows) or
/// canonically (all subsets).
fn subsets_of_size(n: usize, k: usize, geometry: Geometry) -> Vec<QubitSet> {
    if k > n {
        return Vec::new();
    }
    let mut out: Vec<QubitSet> = Vec::new();
    match geometry {
        Geometry::Chain => {
            for start in 0..=n - k {
                out.push(QubitSet::window(start, k, n));
            }
        }
        Geometry::Ring => {
            for start in 0..n {
                let w = QubitSet::window(start, k, n);
                if !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        Geometry::AllSubsets => {
            out = QubitSet::full(n).subsets().filter(|s| s.len() == k).collect();
            out.sort();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Add,
    Remove,
    Stay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub target: Option<usize>,
}

impl ActionSpec {
    pub const STAY: ActionSpec = ActionSpec {
        kind: ActionKind::Stay,
        target: None,
    };

    pub fn add(i: usize) -> Self {
        ActionSpec {
            kind: ActionKind::Add,
            target: Some(i),
        }
    }

    pub fn remove(i: usize) -> Self {
        ActionSpec {
            kind: ActionKind::Remove,
            target: Some(i),
        }
    }
}

/// The ordered candidate subsets that make up the state encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidatePool {
    n: usize,
    budget: u64,
    geometry: Geometry,
    candidates: Vec<QubitSet>,
    index: BTreeMap<QubitSet, usize>,
}

/// Builds the pool of subsets of size `2..=max_body` allowed by `geometry`
/// whose solo cost fits in `budget`, in canonical order.
pub fn candidate_pool(n: usize, budget: u64, geometry: Geometry, max_body: usize) -> Result<CandidatePool> {
    if n < 2 {
        return Err(Error::TooFewQubits { n, min: 2 });
    }
    if max_body > 4 {
        return Err(Error::SupportTooLarge {
            size: max_body,
            limit: 4,
        });
    }
    let mut candidates: Vec<QubitSet> = (2..=max_body.min(n))
        .flat_map(|k| subsets_of_size(n, k, geometry))
        .filter(|&s| cost(&ConstraintSet::new(n, [s]).expect("in range")) <= budget)
        .collect();
    candidates.sort();
    candidates.dedup();
    if candidates.is_empty() {
        return Err(Error::EmptyPool { budget });
    }
    let index = candidates.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(CandidatePool {
        n,
        budget,
        geometry,
        candidates,
        index,
    })
}

impl CandidatePool {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn candidates(&self) -> &[QubitSet] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Number of actions: one toggle per candidate plus stay.
    pub fn action_count(&self) -> usize {
        self.candidates.len() + 1
    }

    pub fn position(&self, s: QubitSet) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// Interprets action index `i` in state `c`: toggling candidate `i`
    /// (remove if active, add otherwise), or stay for the last index.
    pub fn action_from_index(&self, c: &ConstraintSet, i: usize) -> Result<ActionSpec> {
        if i == self.candidates.len() {
            return Ok(ActionSpec::STAY);
        }
        let s = *self.candidates.get(i).ok_or(Error::BadCandidate {
            index: i,
            len: self.candidates.len(),
        })?;
        Ok(if c.contains(s) {
            ActionSpec::remove(i)
        } else {
            ActionSpec::add(i)
        })
    }

    pub fn action_index(&self, a: ActionSpec) -> usize {
        a.target.unwrap_or(self.candidates.len())
    }

    /// Validity mask over action indices. Adds that would be absorbed by an
    /// active superset, or would exceed the budget, are invalid.
    pub fn valid_actions(&self, c: &ConstraintSet) -> Vec<bool> {
        let base = cost(c);
        let covered = c.covered();
        let mut mask: Vec<bool> = self
            .candidates
            .iter()
            .map(|&s| {
                if c.contains(s) {
                    return true;
                }
                if c.covers(s) {
                    return false;
                }
                // Fast path: cost after adding s and absorbing its subsets.
                let absorbed: u64 = c
                    .subsets
                    .iter()
                    .filter(|t| t.is_subset(s))
                    .map(|t| marginal_cost(t.len()))
                    .sum();
                let newly_covered = s.difference(covered).len() as u64;
                base + marginal_cost(s.len()) - absorbed - 3 * newly_covered <= self.budget
            })
            .collect();
        mask.push(true);
        mask
    }

    /// One bit per candidate, set iff the candidate is active.
    pub fn encode(&self, c: &ConstraintSet) -> Result<Vec<bool>> {
        let mut bits = alloc::vec![false; self.candidates.len()];
        for s in c.subsets() {
            let i = self.position(s).ok_or(Error::NotInPool(s))?;
            bits[i] = true;
        }
        Ok(bits)
    }

    pub fn decode(&self, bits: &[bool]) -> Result<ConstraintSet> {
        if bits.len() != self.candidates.len() {
            return Err(Error::EncodingLength {
                expected: self.candidates.len(),
                got: bits.len(),
            });
        }
        ConstraintSet::new(
            self.n,
            bits.iter().zip(&self.candidates).filter(|(b, _)| **b).map(|(_, s)| *s),
        )
    }

    /// Applies an action, returning the simplified successor state.
    pub fn apply_action(&self, c: &ConstraintSet, a: ActionSpec) -> Result<ConstraintSet> {
        let target = match (a.kind, a.target) {
            (ActionKind::Stay, _) => return Ok(c.clone()),
            (_, Some(i)) => *self.candidates.get(i).ok_or(Error::BadCandidate {
                index: i,
                len: self.candidates.len(),
            })?,
            (_, None) => {
                return Err(Error::BadCandidate {
                    index: usize::MAX,
                    len: self.candidates.len(),
                })
            }
        };
        match a.kind {
            ActionKind::Add => {
                if c.covers(target) {
                    return Err(Error::AlreadyActive(target));
                }
                let mut next = c.clone();
                next.subsets.insert(target);
                let next = simplify(&next);
                let p = cost(&next);
                if p > self.budget {
                    return Err(Error::OverBudget {
                        subset: target,
                        cost: p,
                        budget: self.budget,
                    });
                }
                Ok(next)
            }
            ActionKind::Remove => {
                if !c.contains(target) {
                    return Err(Error::NotActive(target));
                }
                let mut next = c.clone();
                next.subsets.remove(&target);
                for part in target.maximal_proper_subsets() {
                    if part.len() >= 2 && self.index.contains_key(&part) && !next.covers(part) {
                        next.subsets.insert(part);
                    }
                }
                let next = simplify(&next);
                let p = cost(&next);
                if p > self.budget {
                    return Err(Error::OverBudget {
                        subset: target,
                        cost: p,
                        budget: self.budget,
                    });
                }
                Ok(next)
            }
            ActionKind::Stay => unreachable!(),
        }
    }

    /// Successors of `c` under every valid non-stay action, in action order.
    pub fn neighbors(&self, c: &ConstraintSet) -> Vec<(usize, ConstraintSet)> {
        self.valid_actions(c)
            .iter()
            .enumerate()
            .take(self.candidates.len())
            .filter(|(_, ok)| **ok)
            .filter_map(|(i, _)| {
                let a = self.action_from_index(c, i).ok()?;
                self.apply_action(c, a).ok().map(|s| (i, s))
            })
            .collect()
    }

    /// Every state reachable from the minimal set, in breadth-first order.
    pub fn reachable_states(&self) -> Vec<ConstraintSet> {
        let start = ConstraintSet::minimal(self.n);
        let mut seen: BTreeSet<ConstraintSet> = BTreeSet::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        seen.insert(start.clone());
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for (_, next) in self.neighbors(&c) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
            order.push(c);
        }
        order
    }
}

/// Renders a bit vector as a `0`/`1` string.
pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(n: usize, subsets: &[&[usize]]) -> ConstraintSet {
        ConstraintSet::new(n, subsets.iter().map(|s| s.iter().copied().collect())).unwrap()
    }

    #[test]
    fn ring_pool_counts() {
        let pool = candidate_pool(6, 10_000, Geometry::Ring, 3).unwrap();
        assert_eq!(pool.len(), 12);
        let pool = candidate_pool(4, 10_000, Geometry::Ring, 3).unwrap();
        let got: Vec<Vec<usize>> = pool.candidates().iter().map(|s| s.to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 1],
                vec![0, 3],
                vec![1, 2],
                vec![2, 3],
                vec![0, 1, 2],
                vec![0, 1, 3],
                vec![0, 2, 3],
                vec![1, 2, 3]
            ]
        );
    }

    #[test]
    fn chain_pool_has_no_wrap() {
        let pool = candidate_pool(5, 10_000, Geometry::Chain, 4).unwrap();
        assert_eq!(pool.len(), 4 + 3 + 2);
        assert!(pool.position(QubitSet::from_iter([0, 4])).is_none());
    }

    #[test]
    fn budget_below_cheapest_pair_is_an_error() {
        assert!(matches!(
            candidate_pool(2, 14, Geometry::Ring, 2),
            Err(Error::EmptyPool { budget: 14 })
        ));
        assert!(candidate_pool(2, 15, Geometry::Ring, 2).is_ok());
    }

    #[test]
    fn pool_excludes_expensive_candidates() {
        let budget = BudgetPreset::HalfThreeBody.resolve(6, Geometry::Ring);
        assert_eq!(budget, 3 * 63 + 2 * 15);
        let pool = candidate_pool(6, budget, Geometry::Ring, 4).unwrap();
        assert!(pool.candidates().iter().all(|s| s.len() <= 3));
        let budget = BudgetPreset::HalfThreeBody.resolve(10, Geometry::Ring);
        let pool = candidate_pool(10, budget, Geometry::Ring, 4).unwrap();
        assert_eq!(pool.candidates().iter().filter(|s| s.len() == 4).count(), 10);
        assert_eq!(BudgetPreset::AllThreeBody.resolve(6, Geometry::Ring), 6 * 63);
    }

    #[test]
    fn simplify_examples() {
        assert_eq!(simplify(&set(3, &[&[0, 1], &[0, 1, 2]])), set(3, &[&[0, 1, 2]]));
        let anti = set(4, &[&[0, 1], &[1, 2], &[2, 3]]);
        assert_eq!(simplify(&anti), anti);
        assert_eq!(simplify(&ConstraintSet::minimal(4)), ConstraintSet::minimal(4));
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&set(2, &[&[0, 1]])), 15);
        assert_eq!(cost(&set(3, &[&[0, 1], &[0, 1, 2]])), 63);
        assert_eq!(cost(&ConstraintSet::minimal(6)), 18);
        // Pairs {0,1},{2,3} on six qubits leave two implicit one-body marginals.
        assert_eq!(cost(&set(6, &[&[0, 1], &[2, 3]])), 30 + 6);
    }

    #[test]
    fn encode_examples() {
        let pool = candidate_pool(6, 10_000, Geometry::Ring, 3).unwrap();
        assert!(pool.encode(&ConstraintSet::minimal(6)).unwrap().iter().all(|b| !b));
        let first = ConstraintSet::new(6, [pool.candidates()[0]]).unwrap();
        let bits = pool.encode(&first).unwrap();
        assert!(bits[0] && bits.iter().filter(|b| **b).count() == 1);
        assert_eq!(pool.decode(&bits).unwrap(), first);
        assert!(matches!(pool.encode(&set(6, &[&[0, 3]])), Err(Error::NotInPool(_))));
        assert_eq!(bit_string(&[true, false, true]), "101");
    }

    #[test]
    fn remove_splits_into_windows() {
        let pool = candidate_pool(6, 10_000, Geometry::Chain, 4).unwrap();
        let c = set(6, &[&[0, 1, 2, 3]]);
        let i = pool.position(QubitSet::from_iter([0, 1, 2, 3])).unwrap();
        let next = pool.apply_action(&c, ActionSpec::remove(i)).unwrap();
        assert_eq!(next, set(6, &[&[0, 1, 2], &[1, 2, 3]]));
    }

    #[test]
    fn remove_pair_leaves_implicit_marginals() {
        let pool = candidate_pool(4, 10_000, Geometry::Ring, 3).unwrap();
        let c = set(4, &[&[0, 1]]);
        let i = pool.position(QubitSet::from_iter([0, 1])).unwrap();
        let next = pool.apply_action(&c, ActionSpec::remove(i)).unwrap();
        assert_eq!(next, ConstraintSet::minimal(4));
    }

    #[test]
    fn add_then_remove_triplet() {
        let pool = candidate_pool(6, 10_000, Geometry::Ring, 3).unwrap();
        let i = pool.position(QubitSet::from_iter([1, 2, 3])).unwrap();
        let c = pool
            .apply_action(&ConstraintSet::minimal(6), ActionSpec::add(i))
            .unwrap();
        let back = pool.apply_action(&c, ActionSpec::remove(i)).unwrap();
        assert_eq!(back, set(6, &[&[1, 2], &[2, 3]]));
    }

    #[test]
    fn action_errors() {
        let pool = candidate_pool(6, 80, Geometry::Ring, 3).unwrap();
        let min = ConstraintSet::minimal(6);
        let pair = pool.position(QubitSet::from_iter([0, 1])).unwrap();
        assert!(matches!(
            pool.apply_action(&min, ActionSpec::remove(pair)),
            Err(Error::NotActive(_))
        ));
        let c = set(6, &[&[0, 1], &[2, 3]]);
        let other = pool.position(QubitSet::from_iter([4, 5])).unwrap();
        let c = pool.apply_action(&c, ActionSpec::add(other)).unwrap();
        assert_eq!(cost(&c), 45);
        let triple = pool.position(QubitSet::from_iter([1, 2, 3])).unwrap();
        assert!(matches!(
            pool.apply_action(&c, ActionSpec::add(triple)),
            Err(Error::OverBudget { .. })
        ));
        assert!(!pool.valid_actions(&c)[triple]);
        assert!(matches!(
            pool.apply_action(&c, ActionSpec::add(pair)),
            Err(Error::AlreadyActive(_))
        ));
        assert_eq!(pool.apply_action(&c, ActionSpec::STAY).unwrap(), c);
    }

    #[test]
    fn partial_order_examples() {
        let a = set(4, &[&[0, 1]]);
        let b = set(4, &[&[1, 2]]);
        assert!(partial_order_leq(&a, &a));
        assert!(!partial_order_leq(&a, &b) && !partial_order_leq(&b, &a));
        assert!(partial_order_leq(&ConstraintSet::minimal(4), &a));
        assert!(partial_order_leq(&a, &set(4, &[&[0, 1, 2]])));
    }

    #[test]
    fn parse_round_trip() {
        let c = ConstraintSet::parse(6, "[[0,1,2],[2,3],[3,4,5]]").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(ConstraintSet::parse(6, &alloc::format!("{c}")).unwrap(), c);
        assert_eq!(ConstraintSet::parse(3, " [ ] ").unwrap(), ConstraintSet::minimal(3));
        assert!(ConstraintSet::parse(3, "[[0,1],[1,").is_err());
        assert!(ConstraintSet::parse(3, "[[0,7]]").is_err());
        assert!(ConstraintSet::parse(3, "[[0,x]]").is_err());
    }

    #[test]
    fn valid_mask_matches_apply() {
        let pool = candidate_pool(
            6,
            BudgetPreset::HalfThreeBody.resolve(6, Geometry::Ring),
            Geometry::Ring,
            4,
        )
        .unwrap();
        for state in pool.reachable_states().iter().take(300) {
            let mask = pool.valid_actions(state);
            for (i, ok) in mask.iter().enumerate().take(pool.len()) {
                let a = pool.action_from_index(state, i).unwrap();
                assert_eq!(*ok, pool.apply_action(state, a).is_ok(), "{state} action {i}");
            }
        }
    }
}
