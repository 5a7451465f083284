use std::collections::BTreeSet;

use certsearch::cache::SharedCache;
use certsearch::config::{ExperimentConfig, HamiltonianConfig, ScanConfig};
use certsearch::experiments::{enumerate, rng_for, run_scan, Problem};
use certsearch::model::agents::{bfs_search, first_visits_to_reward, mc_search, McConfig};
use certsearch::model::constraints::ConstraintSet;
use proptest::prelude::*;

fn problem() -> Problem {
    Problem::from_config(&ExperimentConfig::new(HamiltonianConfig::xx(6, 1.0, 1.0))).unwrap()
}

#[test]
fn bfs_never_revisits() {
    let p = problem();
    let store = SharedCache::new();
    let mut env = p.env(&store, 5, 2.0).unwrap();
    let out = bfs_search(&mut env, 300, None, &mut rng_for(1, 0)).unwrap();
    let distinct: BTreeSet<&ConstraintSet> = out.visits.iter().collect();
    assert_eq!(distinct.len(), out.visits.len());
    assert!(out.visits.len() <= 300);
}

#[test]
fn bfs_and_mc_find_the_enumerated_optimum() {
    let p = problem();
    let store = SharedCache::new();
    let e = enumerate(&p, &store).unwrap();
    let ledger = e.ledger(2.0);
    let (best, _, _) = e.optimum(2.0);
    let mut env = p.env(&store, 5, 2.0).unwrap();
    env.set_ledger(ledger);
    let out = bfs_search(&mut env, 100_000, None, &mut rng_for(2, 0)).unwrap();
    assert_eq!(&out.best_state, best);
    let mut env = p.env(&store, 5, 2.0).unwrap();
    env.set_ledger(ledger);
    let out = mc_search(
        &mut env,
        McConfig::new(0.084).unwrap(),
        4000,
        Some(0.95),
        &mut rng_for(3, 0),
    )
    .unwrap();
    assert!(out.best_reward >= 0.95);
}

fn states() -> Vec<ConstraintSet> {
    [
        "[]",
        "[[0,1]]",
        "[[0,1],[2,3]]",
        "[[0,1,2]]",
        "[[1,2,3]]",
        "[[0,1,2],[3,4,5]]",
    ]
    .iter()
    .map(|s| ConstraintSet::parse(6, s).unwrap())
    .collect()
}

proptest! {
    #[test]
    fn repeated_visits_do_not_change_the_score(
        walk in proptest::collection::vec(0usize..6, 1..30),
        repeats in proptest::collection::vec(any::<prop::sample::Index>(), 0..20),
        goal in 0usize..6,
    ) {
        let all = states();
        let visits: Vec<ConstraintSet> = walk.iter().map(|&i| all[i].clone()).collect();
        let score = |c: &ConstraintSet| if *c == all[goal] { 1.0 } else { 0.0 };
        let base = first_visits_to_reward(&visits, score, 0.95);
        // Revisit something already seen right after its first visit.
        let mut noisy = visits.clone();
        for r in repeats {
            let at = r.index(noisy.len());
            let again = noisy[at].clone();
            noisy.insert(at + 1, again);
        }
        prop_assert_eq!(first_visits_to_reward(&noisy, score, 0.95), base);
    }
}

#[test]
fn scan_is_deterministic() {
    let mut cfg = ExperimentConfig::new(HamiltonianConfig::xx(6, 1.0, 0.0));
    cfg.scan = Some(ScanConfig {
        grid: vec![0.5, 3.0],
        pattern_sizes: vec![],
    });
    let a = run_scan(&cfg).unwrap();
    let b = run_scan(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|r| r.label == "optimum"));
}
