//! The five CLI experiments as library functions.

use std::collections::BTreeSet;
use std::time::Instant;

use certsearch_core::agents::{
    bfs_search, first_visits_to_reward, mc_search, transfer, DqnAgent, DqnConfig, ExplorationSchedule, McConfig,
    SearchOutcome,
};
use certsearch_core::constraints::{cost, partial_order_leq, BudgetPreset, CandidatePool, ConstraintSet, Geometry};
use certsearch_core::env::{
    bound_or_failed, episode_length, BoundStore, Environment, EpisodeConfig, LedgerRefs, RewardLedger, StepRecord,
    BETA_TIE_TOL,
};
use certsearch_core::hamiltonian::{exact_ground_energy, homogeneous_xx, triplet_xx, LocalHamiltonian, EXACT_LIMIT};
use certsearch_core::patterns::{interaction_components, Pattern};
use certsearch_core::relaxation::{solve_bound, BoundResult, RelaxationOptions};
use certsearch_core::sdp::SolveStatus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::SharedCache;
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{AppError, Result};
use crate::io::JsonlWriter;

/// Slack allowed when auditing a bound against the exact ground energy.
pub const AUDIT_TOL: f64 = 1e-6;

/// Independent stream per (seed, purpose).
pub fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

/// A Hamiltonian with its candidate pool and solver settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub h: LocalHamiltonian,
    pub pool: CandidatePool,
    pub opts: RelaxationOptions,
    pub budget: BudgetPreset,
}

impl Problem {
    pub fn new(
        h: LocalHamiltonian,
        budget: BudgetPreset,
        geometry: Geometry,
        max_body: usize,
        opts: RelaxationOptions,
    ) -> Result<Self> {
        let b = budget.resolve(h.n(), geometry);
        let pool = certsearch_core::constraints::candidate_pool(h.n(), b, geometry, max_body)?;
        Ok(Problem { h, pool, opts, budget })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::with_hamiltonian(cfg, cfg.model.build()?)
    }

    pub fn with_hamiltonian(cfg: &ExperimentConfig, h: LocalHamiltonian) -> Result<Self> {
        Problem::new(
            h,
            cfg.search.budget.preset()?,
            cfg.search.geometry.into(),
            cfg.search.max_body,
            cfg.relaxation.options()?,
        )
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn env<S: BoundStore>(&self, store: S, length: usize, d: f64) -> Result<Environment<S>> {
        let mut config = EpisodeConfig::new(length, self.budget);
        config.d = d;
        Ok(Environment::new(
            self.h.clone(),
            self.pool.clone(),
            self.opts,
            config,
            store,
        )?)
    }

    /// Cached bound, solving on a miss.
    pub fn bound(&self, store: &SharedCache, c: &ConstraintSet) -> BoundResult {
        if let Some(b) = store.get(c) {
            return b;
        }
        let b = bound_or_failed(&self.h, c, &self.opts);
        store.insert(c.clone(), b.clone());
        b
    }
}

/// Reference ledger over a set of solved states: extreme bounds, and the
/// cheapest and dearest states tying with the best one.
pub fn ledger_refs<'a, I>(results: I) -> Option<LedgerRefs>
where
    I: IntoIterator<Item = &'a BoundResult>,
{
    let ok: Vec<&BoundResult> = results
        .into_iter()
        .filter(|b| b.status != SolveStatus::Failed && b.beta.is_finite())
        .collect();
    let beta_max = ok.iter().map(|b| b.beta).fold(f64::NEG_INFINITY, f64::max);
    let beta_min = ok.iter().map(|b| b.beta).fold(f64::INFINITY, f64::min);
    let ties = ok.iter().filter(|b| b.beta >= beta_max - BETA_TIE_TOL);
    let (p_best, p_worst) = ties.fold((u64::MAX, 0), |(lo, hi), b| (lo.min(b.p), hi.max(b.p)));
    (!ok.is_empty()).then_some(LedgerRefs {
        beta_max,
        beta_min,
        p_best,
        p_worst,
    })
}

/// Every reachable state with its bound, and the full-knowledge ledger.
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub states: Vec<(ConstraintSet, BoundResult)>,
    pub refs: LedgerRefs,
}

impl Enumeration {
    pub fn ledger(&self, d: f64) -> RewardLedger {
        RewardLedger::with_refs(self.refs, d)
    }

    /// Highest reward, then highest bound, then lowest cost, then canonical order.
    pub fn optimum(&self, d: f64) -> (&ConstraintSet, &BoundResult, f64) {
        let ledger = self.ledger(d);
        let mut best: Option<(&ConstraintSet, &BoundResult, f64)> = None;
        for (c, b) in &self.states {
            let r = if b.status == SolveStatus::Failed {
                0.0
            } else {
                ledger.score(b.beta, b.p)
            };
            let better = match best {
                None => true,
                Some((_, bb, br)) => r > br || (r == br && (b.beta > bb.beta || (b.beta == bb.beta && b.p < bb.p))),
            };
            if better {
                best = Some((c, b, r));
            }
        }
        best.expect("the bottom state is always reachable")
    }
}

pub fn reachable_count(pool: &CandidatePool) -> usize {
    pool.reachable_states().len()
}

/// Solves the whole reachable space into `store`.
pub fn enumerate(problem: &Problem, store: &SharedCache) -> Result<Enumeration> {
    let states = problem.pool.reachable_states();
    let solved: Vec<(ConstraintSet, BoundResult)> = states
        .into_par_iter()
        .map(|c| {
            let b = problem.bound(store, &c);
            (c, b)
        })
        .collect();
    let refs = ledger_refs(solved.iter().map(|(_, b)| b))
        .ok_or_else(|| AppError::Solver("every relaxation in the reachable space failed".into()))?;
    Ok(Enumeration { states: solved, refs })
}

/// The set whose blocks are exactly the interacting clusters of `h`.
pub fn cluster_set(h: &LocalHamiltonian) -> Result<ConstraintSet> {
    Ok(ConstraintSet::new(h.n(), interaction_components(h))?)
}

/// Full-knowledge ledger when the optimum is known in advance: the cluster
/// set is exact, so it fixes `beta_max` and `p_best`; `p_worst` is the
/// dearest budget-feasible strengthening of it.
pub fn cluster_reference(problem: &Problem, store: &SharedCache) -> Result<(ConstraintSet, LedgerRefs)> {
    let top = cluster_set(&problem.h)?;
    if cost(&top) > problem.pool.budget() || top.subsets().any(|s| problem.pool.position(s).is_none()) {
        return Err(AppError::Validation(format!(
            "cluster set {top} is not reachable under the pool"
        )));
    }
    let best = problem.bound(store, &top);
    let bottom = problem.bound(store, &ConstraintSet::minimal(problem.n()));
    if best.status == SolveStatus::Failed || bottom.status == SolveStatus::Failed {
        return Err(AppError::Solver("reference relaxation failed".into()));
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![top.clone()];
    let mut p_worst = best.p;
    while let Some(c) = stack.pop() {
        if !seen.insert(c.clone()) {
            continue;
        }
        p_worst = p_worst.max(cost(&c));
        for (i, next) in problem.pool.neighbors(&c) {
            let is_add = !c.covers(problem.pool.candidates()[i]);
            if is_add && partial_order_leq(&top, &next) && !seen.contains(&next) {
                stack.push(next);
            }
        }
    }
    Ok((
        top,
        LedgerRefs {
            beta_max: best.beta,
            beta_min: bottom.beta,
            p_best: best.p,
            p_worst,
        },
    ))
}

/// `beta <= E0 + AUDIT_TOL`, when the exact energy is affordable.
pub fn audit_bound(h: &LocalHamiltonian, beta: f64) -> Result<Option<f64>> {
    if h.n() > EXACT_LIMIT {
        return Ok(None);
    }
    let e0 = exact_ground_energy(h)?;
    if beta > e0 + AUDIT_TOL {
        return Err(AppError::Solver(format!("bound {beta} exceeds the ground energy {e0}")));
    }
    Ok(Some(e0))
}

// ------------------------------------------------------------------ solve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub n: usize,
    pub constraints: String,
    pub beta: f64,
    pub p: u64,
    pub status: SolveStatus,
    pub dual_certified: bool,
    pub unsupported_offset: f64,
    pub primal_value: f64,
    pub iterations: usize,
    pub exact_ground_energy: Option<f64>,
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveReport> {
    let h = cfg.model.build()?;
    let c = cfg.constraint_set()?;
    let r = solve_bound(&h, &c, &cfg.relaxation.options()?)?;
    if r.status == SolveStatus::Failed {
        return Err(AppError::Solver(format!("relaxation for {c} did not converge")));
    }
    let exact = if h.n() <= 10 { audit_bound(&h, r.beta)? } else { None };
    Ok(SolveReport {
        n: h.n(),
        constraints: c.to_string(),
        beta: r.beta,
        p: r.p,
        status: r.status,
        dual_certified: r.dual_certified,
        unsupported_offset: r.unsupported_offset,
        primal_value: r.primal_value,
        iterations: r.iterations,
        exact_ground_energy: exact,
    })
}

// --------------------------------------------------------------- optimize

/// One state evaluation in a search, in visiting order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub index: usize,
    pub state: String,
    pub beta: f64,
    pub p: u64,
    pub first_visit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n: usize,
    pub budget: u64,
    pub best_state: String,
    pub best_beta: f64,
    pub best_p: u64,
    pub best_reward: f64,
    pub distinct_states: usize,
    pub solves: usize,
    pub converged_after: Option<usize>,
    pub wall_time_s: f64,
}

/// Everything `optimize` produces.
pub struct OptimizeRun {
    pub report: OptimizeReport,
    pub visits: Vec<VisitRecord>,
    /// Final greedy episode of the RL agent.
    pub trajectory: Vec<StepRecord>,
    /// Greedy evaluation reward after each training episode.
    pub eval_rewards: Vec<f64>,
    pub agent: Option<DqnAgent>,
}

pub fn dqn_config(cfg: &ExperimentConfig, n: usize) -> DqnConfig {
    let mut d = DqnConfig::for_size(n);
    d.max_episodes = cfg.search.episodes;
    if let Some(lr) = cfg.search.lr {
        d.lr = lr;
    }
    if let Some(g) = cfg.search.discount {
        d.discount = g;
    }
    if let Some(delta) = cfg.search.delta {
        d.schedule = ExplorationSchedule::new(delta);
    }
    d
}

fn mc_config(cfg: &ExperimentConfig) -> Result<McConfig> {
    match cfg.search.temperature {
        Some(t) => Ok(McConfig::new(t)?),
        None => Ok(McConfig::benchmark(cfg.search.budget.high())),
    }
}

fn visit_log<S: BoundStore>(env: &Environment<S>, visits: &[ConstraintSet]) -> Vec<VisitRecord> {
    let mut seen = BTreeSet::new();
    visits
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let (b, _) = env.bound(c);
            VisitRecord {
                index,
                state: c.to_string(),
                beta: b.beta,
                p: b.p,
                first_visit: seen.insert(c.clone()),
            }
        })
        .collect()
}

/// Searches with a running ledger, as an agent without prior knowledge would.
pub fn run_optimize(cfg: &ExperimentConfig, seed: u64, init: Option<DqnAgent>) -> Result<OptimizeRun> {
    let problem = Problem::from_config(cfg)?;
    let n = problem.n();
    let store = SharedCache::new();
    let length = cfg
        .search
        .episode_length
        .unwrap_or_else(|| episode_length(n, cfg.search.budget.high()));
    let mut env = problem.env(&store, length, cfg.search.d)?;
    let mut rng = rng_for(seed, 0x6f70);
    let start = Instant::now();
    let mut trajectory = Vec::new();
    let mut eval_rewards = Vec::new();
    let mut converged_after = None;
    let mut agent_out = None;

    let (best_state, visits) = match cfg.search.algorithm {
        Algorithm::Rl => {
            // The running ledger has seen little early on, so an early greedy
            // reward near 1 says nothing; train for the full episode count.
            let dcfg = DqnConfig {
                stop_on_convergence: false,
                ..dqn_config(cfg, n)
            };
            let mut agent = match init {
                Some(a) => transfer(&a, &problem.pool, dcfg)?,
                None => DqnAgent::new(&problem.pool, dcfg, &mut rng)?,
            };
            let out = agent.train(&mut env, &mut rng)?;
            trajectory = agent.greedy_trajectory(&mut env)?;
            eval_rewards = out.eval_rewards;
            converged_after = out.converged_after;
            let visits = env.take_visits();
            let best = best_visited(&env, &visits);
            agent_out = Some(agent);
            (best, visits)
        }
        Algorithm::Mc => {
            let o = mc_search(&mut env, mc_config(cfg)?, cfg.search.max_states, None, &mut rng)?;
            (o.best_state, o.visits)
        }
        Algorithm::Bfs => {
            let o = bfs_search(&mut env, cfg.search.max_states, None, &mut rng)?;
            (o.best_state, o.visits)
        }
        Algorithm::Exhaustive => {
            let e = enumerate(&problem, &store)?;
            env.set_ledger(e.ledger(cfg.search.d));
            let (c, _, _) = e.optimum(cfg.search.d);
            let visits: Vec<ConstraintSet> = e.states.iter().map(|(c, _)| c.clone()).collect();
            (c.clone(), visits)
        }
    };
    let (b, _) = env.bound(&best_state);
    audit_bound(&problem.h, b.beta)?;
    let distinct = visits.iter().collect::<BTreeSet<_>>().len();
    let report = OptimizeReport {
        algorithm: cfg.search.algorithm,
        seed,
        n,
        budget: problem.pool.budget(),
        best_state: best_state.to_string(),
        best_beta: b.beta,
        best_p: b.p,
        best_reward: env.ledger().score(b.beta, b.p),
        distinct_states: distinct,
        solves: store.len(),
        converged_after,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(OptimizeRun {
        report,
        visits: visit_log(&env, &visits),
        trajectory,
        eval_rewards,
        agent: agent_out,
    })
}

fn best_visited<S: BoundStore>(env: &Environment<S>, visits: &[ConstraintSet]) -> ConstraintSet {
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut state = ConstraintSet::minimal(env.pool().n());
    for c in visits {
        let (b, _) = env.bound(c);
        let r = env.ledger().score(b.beta, b.p);
        if (r, b.beta) > best {
            best = (r, b.beta);
            state = c.clone();
        }
    }
    state
}

// -------------------------------------------------------------- benchmark

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub budget: u64,
    pub seed: u64,
    /// Distinct states visited up to the first one scoring at least the threshold.
    #[serde(rename = "new_states_visited_to_0.95")]
    pub new_states_visited: Option<usize>,
    pub wall_time_s: f64,
    pub best_beta: f64,
    pub best_state: String,
    pub best_reward: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub runs: usize,
    pub reached: usize,
    /// Over the runs that reached the threshold.
    pub mean_new_states: f64,
    pub median_new_states: f64,
    pub reference: String,
}

/// How the full-knowledge ledger of a benchmark size was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub refs: LedgerRefs,
    pub optimum: ConstraintSet,
    pub method: &'static str,
    pub reachable: Option<usize>,
}

pub fn benchmark_reference(problem: &Problem, store: &SharedCache, cap: usize, d: f64) -> Result<Reference> {
    let states = problem.pool.reachable_states();
    if states.len() <= cap {
        let reachable = states.len();
        let e = enumerate(problem, store)?;
        let (c, _, _) = e.optimum(d);
        return Ok(Reference {
            refs: e.refs,
            optimum: c.clone(),
            method: "exhaustive",
            reachable: Some(reachable),
        });
    }
    let (optimum, refs) = cluster_reference(problem, store)?;
    Ok(Reference {
        refs,
        optimum,
        method: "cluster",
        reachable: None,
    })
}

/// One ensemble member: search with the ledger seeded by the reference,
/// stopping as soon as a state reaches `threshold`.
pub fn benchmark_run(
    problem: &Problem,
    store: &SharedCache,
    reference: &Reference,
    algorithm: Algorithm,
    seed: u64,
    cfg: &ExperimentConfig,
    threshold: f64,
) -> BenchmarkRecord {
    let n = problem.n();
    let start = Instant::now();
    let d = cfg.search.d;
    let ledger = RewardLedger::with_refs(reference.refs, d);
    let outcome = (|| -> Result<SearchOutcome> {
        let length = cfg
            .search
            .episode_length
            .unwrap_or_else(|| episode_length(n, cfg.search.budget.high()));
        let mut env = problem.env(store, length, d)?;
        env.set_ledger(ledger);
        let mut rng = rng_for(seed, algorithm as u64 + 1);
        let cap = cfg.search.max_states;
        match algorithm {
            Algorithm::Rl => {
                let mut dcfg = dqn_config(cfg, n);
                dcfg.stop_on_visit_reward = Some(threshold);
                dcfg.stop_on_convergence = false;
                let mut agent = DqnAgent::new(&problem.pool, dcfg, &mut rng)?;
                agent.train(&mut env, &mut rng)?;
                let visits = env.take_visits();
                let best = best_visited(&env, &visits);
                let (b, _) = env.bound(&best);
                Ok(SearchOutcome {
                    best_reward: env.ledger().score(b.beta, b.p),
                    best_beta: b.beta,
                    best_p: b.p,
                    best_state: best,
                    visits,
                })
            }
            Algorithm::Mc => Ok(mc_search(&mut env, mc_config(cfg)?, cap, Some(threshold), &mut rng)?),
            Algorithm::Bfs => Ok(bfs_search(&mut env, cap, Some(threshold), &mut rng)?),
            Algorithm::Exhaustive => Err(AppError::Validation("exhaustive is not a benchmark algorithm".into())),
        }
    })();
    let budget = problem.pool.budget();
    match outcome {
        Ok(o) => {
            let score = first_visits_to_reward(
                &o.visits,
                |c| {
                    let b = problem.bound(store, c);
                    if b.status == SolveStatus::Failed {
                        0.0
                    } else {
                        ledger.score(b.beta, b.p)
                    }
                },
                threshold,
            );
            BenchmarkRecord {
                algorithm,
                n,
                budget,
                seed,
                new_states_visited: score,
                wall_time_s: start.elapsed().as_secs_f64(),
                best_beta: o.best_beta,
                best_state: o.best_state.to_string(),
                best_reward: o.best_reward,
                error: None,
            }
        }
        Err(e) => BenchmarkRecord {
            algorithm,
            n,
            budget,
            seed,
            new_states_visited: None,
            wall_time_s: start.elapsed().as_secs_f64(),
            best_beta: f64::NAN,
            best_state: String::new(),
            best_reward: 0.0,
            error: Some(e.to_string()),
        },
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn summarize_benchmark(records: &[BenchmarkRecord], references: &[(usize, String)]) -> Vec<BenchmarkSummary> {
    let mut keys: Vec<(Algorithm, usize)> = records.iter().map(|r| (r.algorithm, r.n)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(algorithm, n)| {
            let runs: Vec<&BenchmarkRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.n == n)
                .collect();
            let mut counts: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.new_states_visited)
                .map(|c| c as f64)
                .collect();
            let mean = if counts.is_empty() {
                f64::NAN
            } else {
                counts.iter().sum::<f64>() / counts.len() as f64
            };
            BenchmarkSummary {
                algorithm,
                n,
                runs: runs.len(),
                reached: counts.len(),
                mean_new_states: mean,
                median_new_states: median(&mut counts),
                reference: references
                    .iter()
                    .find(|(m, _)| *m == n)
                    .map(|(_, s)| s.clone())
                    .unwrap_or_default(),
            }
        })
        .collect()
}

/// Benchmark on the `J_i = i mod 3` ring. Records are appended to `sink` as
/// they complete.
pub fn run_benchmark<W: std::io::Write + Send>(
    cfg: &ExperimentConfig,
    sink: Option<&JsonlWriter<W>>,
) -> Result<(Vec<BenchmarkRecord>, Vec<BenchmarkSummary>)> {
    let bench = cfg
        .benchmark
        .as_ref()
        .ok_or_else(|| AppError::Validation("benchmark section missing".into()))?;
    let field = cfg.model.b.scalar().unwrap_or(0.0);
    let mut records = Vec::new();
    let mut references = Vec::new();
    for &n in &bench.sizes {
        let problem = Problem::with_hamiltonian(cfg, triplet_xx(n, field)?)?;
        let store = SharedCache::new();
        let reference = benchmark_reference(&problem, &store, bench.enumeration_cap, cfg.search.d)?;
        references.push((n, format!("{} optimum {}", reference.method, reference.optimum)));
        let jobs: Vec<(Algorithm, u64)> = bench
            .algorithms
            .iter()
            .flat_map(|&a| cfg.search.seeds.iter().map(move |&s| (a, s)))
            .collect();
        let mut batch: Vec<BenchmarkRecord> = jobs
            .into_par_iter()
            .map(|(a, s)| {
                let r = benchmark_run(&problem, &store, &reference, a, s, cfg, bench.threshold);
                if let Some(w) = sink {
                    // A failed append loses one log line, not the run.
                    let _ = w.append(&r);
                }
                r
            })
            .collect();
        batch.sort_by_key(|r| (r.algorithm, r.seed));
        records.extend(batch);
    }
    let summary = summarize_benchmark(&records, &references);
    Ok((records, summary))
}

// ------------------------------------------------------------------- scan

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub b_over_j: f64,
    pub n: usize,
    /// `a`..`d`, `empty`, or `optimum`.
    pub label: String,
    pub state: String,
    pub beta: f64,
    pub p: u64,
    pub reward: f64,
    pub reward_optimal: bool,
    pub exact_ground_energy: Option<f64>,
}

fn xx_coupling(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.model
        .j
        .scalar()
        .filter(|j| *j != 0.0)
        .ok_or_else(|| AppError::Validation("scan and transfer need a nonzero scalar J".into()))
}

/// Four canonical patterns plus the exhaustive optimum at every grid
/// point, and the patterns alone at `pattern_sizes`.
pub fn run_scan(cfg: &ExperimentConfig) -> Result<Vec<ScanRow>> {
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| AppError::Validation("scan section missing".into()))?;
    let j = xx_coupling(cfg)?;
    let n = cfg.model.n;
    let d = cfg.search.d;
    let mut rows = Vec::new();
    for &g in &scan.grid {
        let problem = Problem::with_hamiltonian(cfg, homogeneous_xx(n, j, g * j)?)?;
        let store = SharedCache::new();
        let e = enumerate(&problem, &store)?;
        let ledger = e.ledger(d);
        let e0 = audit_all(&problem.h, e.states.iter().map(|(_, b)| b.beta))?;
        let best = e.optimum(d);
        let best_reward = best.2;
        let mut push = |label: String, c: &ConstraintSet, b: &BoundResult| {
            let reward = if b.status == SolveStatus::Failed {
                0.0
            } else {
                ledger.score(b.beta, b.p)
            };
            rows.push(ScanRow {
                b_over_j: g,
                n,
                label,
                state: c.to_string(),
                beta: b.beta,
                p: b.p,
                reward,
                reward_optimal: reward >= best_reward - 1e-12,
                exact_ground_energy: e0,
            });
        };
        for pat in Pattern::ALL {
            if let Ok(c) = pat.constraint_set(n) {
                let b = problem.bound(&store, &c);
                push(pat.to_string(), &c, &b);
            }
        }
        let bottom = ConstraintSet::minimal(n);
        push("empty".into(), &bottom, &problem.bound(&store, &bottom));
        push("optimum".into(), best.0, best.1);
    }
    for &m in &scan.pattern_sizes {
        for &g in &scan.grid {
            rows.extend(pattern_rows(cfg, m, j, g)?);
        }
    }
    Ok(rows)
}

/// Patterns at size `m`, scored against each other and the bottom state only.
pub fn pattern_rows(cfg: &ExperimentConfig, m: usize, j: f64, g: f64) -> Result<Vec<ScanRow>> {
    let h = homogeneous_xx(m, j, g * j)?;
    let opts = cfg.relaxation.options()?;
    let mut solved: Vec<(String, ConstraintSet, BoundResult)> = Vec::new();
    for pat in Pattern::ALL {
        if let Ok(c) = pat.constraint_set(m) {
            let b = bound_or_failed(&h, &c, &opts);
            solved.push((pat.to_string(), c, b));
        }
    }
    let bottom = ConstraintSet::minimal(m);
    let b0 = bound_or_failed(&h, &bottom, &opts);
    solved.push(("empty".into(), bottom, b0));
    let refs = ledger_refs(solved.iter().map(|(_, _, b)| b))
        .ok_or_else(|| AppError::Solver(format!("all pattern relaxations failed at n = {m}")))?;
    let ledger = RewardLedger::with_refs(refs, cfg.search.d);
    let e0 = audit_all(&h, solved.iter().map(|(_, _, b)| b.beta))?;
    let rewards: Vec<f64> = solved.iter().map(|(_, _, b)| ledger.score(b.beta, b.p)).collect();
    let top = rewards.iter().copied().fold(0.0, f64::max);
    Ok(solved
        .into_iter()
        .zip(rewards)
        .map(|((label, c, b), reward)| ScanRow {
            b_over_j: g,
            n: m,
            label,
            state: c.to_string(),
            beta: b.beta,
            p: b.p,
            reward,
            reward_optimal: reward >= top - 1e-12,
            exact_ground_energy: e0,
        })
        .collect())
}

fn audit_all<I: IntoIterator<Item = f64>>(h: &LocalHamiltonian, betas: I) -> Result<Option<f64>> {
    let max = betas.into_iter().fold(f64::NEG_INFINITY, f64::max);
    audit_bound(h, max)
}

// --------------------------------------------------------------- transfer

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub seed: u64,
    pub target: f64,
    /// Episodes to convergence; runs that never converge count as the episode cap.
    pub t0: usize,
    pub t_tl: usize,
    pub t0_converged: bool,
    pub t_tl_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub source: f64,
    pub target: f64,
    pub seeds: usize,
    pub mean_t0: f64,
    pub mean_t_tl: f64,
    /// `mean_t_tl / mean_t0`.
    pub ratio: f64,
    /// Mean of the per-seed ratios.
    pub mean_seed_ratio: f64,
    pub unconverged: usize,
}

/// Episode length for transfer runs: room to build the whole pair chain.
pub fn transfer_episode_length(cfg: &ExperimentConfig) -> usize {
    cfg.search.episode_length.unwrap_or(cfg.model.n + 2)
}

struct Phase {
    problem: Problem,
    store: SharedCache,
    ledger: RewardLedger,
}

fn phase(cfg: &ExperimentConfig, j: f64, g: f64) -> Result<Phase> {
    let problem = Problem::with_hamiltonian(cfg, homogeneous_xx(cfg.model.n, j, g * j)?)?;
    let store = SharedCache::new();
    let e = enumerate(&problem, &store)?;
    Ok(Phase {
        ledger: e.ledger(cfg.search.d),
        problem,
        store,
    })
}

fn train_until_converged(
    phase: &Phase,
    agent: &mut DqnAgent,
    length: usize,
    d: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<usize>> {
    let mut env = phase.problem.env(&phase.store, length, d)?;
    env.set_ledger(phase.ledger);
    Ok(agent.train(&mut env, rng)?.converged_after)
}

/// Trains at the source field, then compares warm and cold starts at each target.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<(Vec<TransferRow>, Vec<TransferRun>)> {
    let t = cfg
        .transfer
        .as_ref()
        .ok_or_else(|| AppError::Validation("transfer section missing".into()))?;
    let j = xx_coupling(cfg)?;
    let d = cfg.search.d;
    let length = transfer_episode_length(cfg);
    let source = phase(cfg, j, t.source)?;
    let dcfg = dqn_config(cfg, cfg.model.n);
    let cap = dcfg.max_episodes;

    let trained: Vec<(u64, DqnAgent)> = cfg
        .search
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = rng_for(seed, 0x5352);
            let mut agent = DqnAgent::new(&source.problem.pool, dcfg, &mut rng)?;
            train_until_converged(&source, &mut agent, length, d, &mut rng)?;
            Ok((seed, agent))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &target in &t.targets {
        let dest = phase(cfg, j, target)?;
        let mut batch: Vec<TransferRun> = trained
            .par_iter()
            .map(|(seed, src)| {
                let mut rng = rng_for(*seed, 0x434f);
                let mut cold = DqnAgent::new(&dest.problem.pool, dcfg, &mut rng)?;
                let t0 = train_until_converged(&dest, &mut cold, length, d, &mut rng)?;
                let mut rng = rng_for(*seed, 0x574d);
                let mut warm = transfer(src, &dest.problem.pool, dcfg)?;
                let ttl = train_until_converged(&dest, &mut warm, length, d, &mut rng)?;
                Ok(TransferRun {
                    seed: *seed,
                    target,
                    t0: t0.unwrap_or(cap),
                    t_tl: ttl.unwrap_or(cap),
                    t0_converged: t0.is_some(),
                    t_tl_converged: ttl.is_some(),
                })
            })
            .collect::<Result<_>>()?;
        batch.sort_by_key(|r| r.seed);
        let k = batch.len() as f64;
        let mean_t0 = batch.iter().map(|r| r.t0 as f64).sum::<f64>() / k;
        let mean_t_tl = batch.iter().map(|r| r.t_tl as f64).sum::<f64>() / k;
        rows.push(TransferRow {
            source: t.source,
            target,
            seeds: batch.len(),
            mean_t0,
            mean_t_tl,
            ratio: mean_t_tl / mean_t0,
            mean_seed_ratio: batch.iter().map(|r| r.t_tl as f64 / r.t0 as f64).sum::<f64>() / k,
            unconverged: batch.iter().filter(|r| !r.t0_converged || !r.t_tl_converged).count(),
        });
        runs.extend(batch);
    }
    Ok((rows, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HamiltonianConfig;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn ledger_refs_takes_tie_range() {
        let mk = |beta: f64, p: u64| BoundResult {
            beta,
            p,
            status: SolveStatus::Optimal,
            dual_certified: true,
            unsupported_offset: 0.0,
            primal_value: beta,
            iterations: 1,
        };
        let r = ledger_refs(&[mk(-3.0, 10), mk(-1.0, 50), mk(-1.0 - 1e-9, 30), mk(-2.0, 5)]).unwrap();
        assert_eq!((r.beta_max, r.beta_min, r.p_best, r.p_worst), (-1.0, -3.0, 30, 50));
        assert!(ledger_refs(&[]).is_none());
    }

    #[test]
    fn small_enumeration_finds_exact_optimum() {
        let cfg = ExperimentConfig::new(HamiltonianConfig::xx(4, 1.0, 1.0));
        let problem = Problem::from_config(&cfg).unwrap();
        let store = SharedCache::new();
        let e = enumerate(&problem, &store).unwrap();
        assert_eq!(e.states.len(), store.len());
        let (_, b, r) = e.optimum(2.0);
        assert_eq!(r, 1.0);
        let e0 = exact_ground_energy(&problem.h).unwrap();
        assert!(b.beta <= e0 + AUDIT_TOL);
    }

    #[test]
    fn cluster_reference_matches_enumeration() {
        let mut cfg = ExperimentConfig::new(HamiltonianConfig::xx(6, 1.0, 1.0));
        cfg.search.d = 2.0;
        let problem = Problem::with_hamiltonian(&cfg, triplet_xx(6, 1.0).unwrap()).unwrap();
        let store = SharedCache::new();
        let e = enumerate(&problem, &store).unwrap();
        let (top, refs) = cluster_reference(&problem, &store).unwrap();
        assert_eq!(top.to_string(), "[[0,4,5],[1,2,3]]");
        assert!((refs.beta_max - e.refs.beta_max).abs() < 1e-7);
        assert!((refs.beta_min - e.refs.beta_min).abs() < 1e-9);
        assert_eq!((refs.p_best, refs.p_worst), (e.refs.p_best, e.refs.p_worst));
        assert_eq!(e.optimum(2.0).0, &top);
    }
}
