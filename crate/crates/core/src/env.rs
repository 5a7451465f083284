//! The search environment: states are constraint sets, actions toggle
//! candidates, and the reward trades bound quality against cost.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use serde::{Deserialize, Serialize};

use crate::constraints::{ActionSpec, BudgetPreset, CandidatePool, ConstraintSet};
use crate::error::{Error, Result};
use crate::hamiltonian::LocalHamiltonian;
use crate::relaxation::{solve_bound, BoundResult, RelaxationOptions};
use crate::sdp::SolveStatus;
#[allow(unused_imports)]
use num_traits::Float;

/// Bounds closer than this count as equal when deciding the `beta_max` branch.
pub const BETA_TIE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRefs {
    pub beta_max: f64,
    pub beta_min: f64,
    pub p_best: u64,
    pub p_worst: u64,
}

/// Reference values for the reward: best and worst bounds seen, and the
/// cheapest and costliest parameter counts at which the best was seen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardLedger {
    refs: Option<LedgerRefs>,
    d: f64,
}

impl RewardLedger {
    pub fn new(d: f64) -> Self {
        RewardLedger { refs: None, d }
    }

    /// A ledger seeded with known extremes.
    pub fn with_refs(refs: LedgerRefs, d: f64) -> Self {
        RewardLedger { refs: Some(refs), d }
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_none()
    }

    pub fn refs(&self) -> Option<LedgerRefs> {
        self.refs
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Absorbs an observation. A strictly better bound resets both costs;
    /// a tie widens them.
    pub fn update(&mut self, beta: f64, p: u64) {
        if !beta.is_finite() {
            return;
        }
        let Some(r) = self.refs.as_mut() else {
            self.refs = Some(LedgerRefs {
                beta_max: beta,
                beta_min: beta,
                p_best: p,
                p_worst: p,
            });
            return;
        };
        if beta > r.beta_max + BETA_TIE_TOL {
            r.beta_max = beta;
            r.p_best = p;
            r.p_worst = p;
        } else if beta >= r.beta_max - BETA_TIE_TOL {
            r.p_best = r.p_best.min(p);
            r.p_worst = r.p_worst.max(p);
        }
        r.beta_min = r.beta_min.min(beta);
    }

    /// Scores `(beta, p)` without updating.
    pub fn score(&self, beta: f64, p: u64) -> f64 {
        reward(beta, p, self)
    }
}

/// Reward in `[0, 1]`.
///
/// At the best bound: `p_best / p`. Otherwise
/// `(p_best / p_worst) * ((beta - beta_min) / (beta_max - beta_min))^d`.
pub fn reward(beta: f64, p: u64, ledger: &RewardLedger) -> f64 {
    let Some(r) = ledger.refs else {
        return 0.0;
    };
    if !beta.is_finite() || p == 0 {
        return 0.0;
    }
    let span = r.beta_max - r.beta_min;
    let value = if beta >= r.beta_max - BETA_TIE_TOL || span <= BETA_TIE_TOL {
        r.p_best as f64 / p as f64
    } else {
        let x = ((beta - r.beta_min) / span).clamp(0.0, 1.0);
        (r.p_best as f64 / r.p_worst as f64) * x.powf(ledger.d)
    };
    value.clamp(0.0, 1.0)
}

/// Memoized bounds keyed by canonical constraint set. Implementations use
/// interior mutability so one store can back several environments.
pub trait BoundStore {
    fn get(&self, key: &ConstraintSet) -> Option<BoundResult>;
    fn insert(&self, key: ConstraintSet, value: BoundResult);
}

impl<T: BoundStore + ?Sized> BoundStore for &T {
    fn get(&self, key: &ConstraintSet) -> Option<BoundResult> {
        (**self).get(key)
    }

    fn insert(&self, key: ConstraintSet, value: BoundResult) {
        (**self).insert(key, value)
    }
}

/// Single-threaded cache.
#[derive(Debug, Default)]
pub struct LocalCache {
    map: RefCell<BTreeMap<ConstraintSet, BoundResult>>,
}

impl LocalCache {
    pub fn new() -> Self {
        LocalCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.borrow().is_empty()
    }
}

impl BoundStore for LocalCache {
    fn get(&self, key: &ConstraintSet) -> Option<BoundResult> {
        self.map.borrow().get(key).cloned()
    }

    fn insert(&self, key: ConstraintSet, value: BoundResult) {
        self.map.borrow_mut().insert(key, value);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CachePolicy {
    #[default]
    Enabled,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub length: usize,
    pub budget: BudgetPreset,
    pub d: f64,
    pub cache: CachePolicy,
}

impl EpisodeConfig {
    pub fn new(length: usize, budget: BudgetPreset) -> Self {
        EpisodeConfig {
            length,
            budget,
            d: 2.0,
            cache: CachePolicy::Enabled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::MalformedProblem("episode length must be at least 1".into()));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::NonFinite(self.d));
        }
        Ok(())
    }
}

/// `ceil(0.7 n)` steps for the half budget, `ceil(1.2 n)` otherwise.
pub fn episode_length(n: usize, high_budget: bool) -> usize {
    if high_budget {
        (12 * n).div_ceil(10)
    } else {
        (7 * n).div_ceil(10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub before: Vec<bool>,
    pub after: Vec<bool>,
    pub action: ActionSpec,
    pub action_index: usize,
    pub beta: f64,
    pub p: u64,
    pub reward: f64,
    pub cache_hit: bool,
}

/// Bound sentinel for states whose solve failed.
pub fn failed_bound(p: u64) -> BoundResult {
    BoundResult {
        beta: f64::NEG_INFINITY,
        p,
        status: SolveStatus::Failed,
        dual_certified: false,
        unsupported_offset: 0.0,
        primal_value: f64::NAN,
        iterations: 0,
    }
}

/// `solve_bound`, with any failure folded into a `Failed` record.
pub fn bound_or_failed(h: &LocalHamiltonian, c: &ConstraintSet, opts: &RelaxationOptions) -> BoundResult {
    match solve_bound(h, c, opts) {
        Ok(r) if r.status != SolveStatus::Failed => r,
        Ok(r) => failed_bound(r.p),
        Err(_) => failed_bound(crate::constraints::cost(c)),
    }
}

pub struct Environment<S: BoundStore> {
    h: LocalHamiltonian,
    pool: CandidatePool,
    opts: RelaxationOptions,
    config: EpisodeConfig,
    store: S,
    ledger: RewardLedger,
    state: ConstraintSet,
    solves: Cell<usize>,
    visits: Vec<ConstraintSet>,
}

impl<S: BoundStore> Environment<S> {
    pub fn new(
        h: LocalHamiltonian,
        pool: CandidatePool,
        opts: RelaxationOptions,
        config: EpisodeConfig,
        store: S,
    ) -> Result<Self> {
        config.validate()?;
        opts.validate()?;
        if h.n() != pool.n() {
            return Err(Error::DimensionMismatch {
                expected: alloc::vec![h.n()],
                got: alloc::vec![pool.n()],
            });
        }
        let state = ConstraintSet::minimal(pool.n());
        Ok(Environment {
            h,
            pool,
            opts,
            ledger: RewardLedger::new(config.d),
            config,
            store,
            state,
            solves: Cell::new(0),
            visits: Vec::new(),
        })
    }

    pub fn hamiltonian(&self) -> &LocalHamiltonian {
        &self.h
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn options(&self) -> &RelaxationOptions {
        &self.opts
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn ledger(&self) -> &RewardLedger {
        &self.ledger
    }

    pub fn set_ledger(&mut self, ledger: RewardLedger) {
        self.ledger = ledger;
    }

    pub fn state(&self) -> &ConstraintSet {
        &self.state
    }

    /// Fresh SDP solves performed by this environment.
    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    /// Every state whose bound was requested, in order, with repeats.
    pub fn visits(&self) -> &[ConstraintSet] {
        &self.visits
    }

    pub fn take_visits(&mut self) -> Vec<ConstraintSet> {
        core::mem::take(&mut self.visits)
    }

    /// Back to the bottom state. The ledger persists.
    pub fn reset(&mut self) -> ConstraintSet {
        self.state = ConstraintSet::minimal(self.pool.n());
        self.state.clone()
    }

    pub fn encode(&self, c: &ConstraintSet) -> Vec<bool> {
        self.pool.encode(c).unwrap_or_default()
    }

    pub fn valid_actions(&self) -> Vec<bool> {
        self.pool.valid_actions(&self.state)
    }

    /// Bound for `c`, from the store when allowed. Returns whether it was cached.
    pub fn bound(&self, c: &ConstraintSet) -> (BoundResult, bool) {
        if self.config.cache == CachePolicy::Enabled {
            if let Some(hit) = self.store.get(c) {
                return (hit, true);
            }
        }
        self.solves.set(self.solves.get() + 1);
        let result = bound_or_failed(&self.h, c, &self.opts);
        if self.config.cache == CachePolicy::Enabled {
            self.store.insert(c.clone(), result.clone());
        }
        (result, false)
    }

    /// Visits `c`: bound, ledger update, then reward.
    pub fn evaluate(&mut self, c: &ConstraintSet) -> (BoundResult, f64, bool) {
        let (b, hit) = self.bound(c);
        self.visits.push(c.clone());
        let reward = if b.status == SolveStatus::Failed {
            0.0
        } else {
            let before = self.ledger.refs();
            self.ledger.update(b.beta, b.p);
            debug_assert!(ledger_monotone(before, self.ledger.refs()));
            self.ledger.score(b.beta, b.p)
        };
        (b, reward, hit)
    }

    /// Reward of an already-cached state under the current ledger, without visiting it.
    pub fn cached_reward(&self, c: &ConstraintSet) -> Option<f64> {
        let b = self.store.get(c)?;
        if b.status == SolveStatus::Failed {
            return Some(0.0);
        }
        Some(self.ledger.score(b.beta, b.p))
    }

    pub fn step(&mut self, a: ActionSpec) -> Result<StepRecord> {
        let next = self.pool.apply_action(&self.state, a)?;
        let before = self.encode(&self.state);
        let (b, reward, cache_hit) = self.evaluate(&next);
        self.state = next;
        Ok(StepRecord {
            before,
            after: self.encode(&self.state),
            action: a,
            action_index: self.pool.action_index(a),
            beta: b.beta,
            p: b.p,
            reward,
            cache_hit,
        })
    }

    /// Steps by flat action index (candidate toggle or Stay).
    pub fn step_index(&mut self, index: usize) -> Result<StepRecord> {
        let a = self.pool.action_from_index(&self.state, index)?;
        self.step(a)
    }
}

fn ledger_monotone(before: Option<LedgerRefs>, after: Option<LedgerRefs>) -> bool {
    match (before, after) {
        (Some(b), Some(a)) => {
            a.beta_max >= b.beta_max && a.beta_min <= b.beta_min && a.beta_min <= a.beta_max && a.p_best <= a.p_worst
        }
        (None, Some(a)) => a.p_best <= a.p_worst,
        (_, None) => true,
    }
}
