use std::collections::HashMap;
use std::sync::RwLock;

use certsearch_core::constraints::ConstraintSet;
use certsearch_core::env::BoundStore;
use certsearch_core::relaxation::BoundResult;

/// Bound cache shared by concurrent agents working on the same Hamiltonian.
/// Reads take a shared lock; two agents racing on one state may both solve
/// it, and the results are identical.
#[derive(Debug, Default)]
pub struct SharedCache {
    map: RwLock<HashMap<ConstraintSet, BoundResult>>,
}

impl SharedCache {
    pub fn new() -> Self {
        SharedCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<(ConstraintSet, BoundResult)> {
        let mut v: Vec<_> = self
            .map
            .read()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

impl BoundStore for SharedCache {
    fn get(&self, key: &ConstraintSet) -> Option<BoundResult> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    fn insert(&self, key: ConstraintSet, value: BoundResult) {
        self.map.write().expect("cache lock").insert(key, value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use certsearch_core::env::failed_bound;
    use rayon::prelude::*;

    #[test]
    fn concurrent_inserts_are_all_kept() {
        let cache = SharedCache::new();
        (2..40usize).into_par_iter().for_each(|n| {
            cache.insert(ConstraintSet::minimal(n), failed_bound(n as u64));
        });
        assert_eq!(cache.len(), 38);
        assert_eq!(cache.get(&ConstraintSet::minimal(7)).unwrap().p, 7);
        assert_eq!(cache.snapshot()[0].0.n(), 2);
    }
}
