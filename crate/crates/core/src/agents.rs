//! Search strategies over constraint sets: double deep Q-learning with a
//! small in-house MLP, breadth-first search and Metropolis Monte Carlo.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{ActionKind, CandidatePool, ConstraintSet};
use crate::env::{BoundStore, Environment, StepRecord};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

// ---------------------------------------------------------------- network

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// Fully connected ReLU network; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Per-layer gradients, same shapes as the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Layer widths `[s, 3s, 2a, 2a, a]` for `s` inputs and `a` actions.
pub fn q_dims(s: usize, a: usize) -> Vec<usize> {
    vec![s, 3 * s, 2 * a, 2 * a, a]
}

impl QNetwork {
    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::MalformedProblem(alloc::format!("bad layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    b: DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(QNetwork { layers })
    }

    /// Network for a candidate pool: one input per candidate, one output
    /// per candidate plus Stay.
    pub fn for_pool<R: Rng + ?Sized>(pool: &CandidatePool, rng: &mut R) -> Result<Self> {
        QNetwork::new(&q_dims(pool.len(), pool.action_count()), rng)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.ncols()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    /// All weights then biases, layer by layer; weights column-major.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: vec![self.param_count()],
                got: vec![params.len()],
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                *v = params[k];
                k += 1;
            }
            for v in l.b.iter_mut() {
                *v = params[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn from_params(dims: &[usize], params: &[f64]) -> Result<Self> {
        let mut net = QNetwork {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    w: DMatrix::zeros(w[1], w[0]),
                    b: DVector::zeros(w[1]),
                })
                .collect(),
        };
        if net.layers.is_empty() {
            return Err(Error::MalformedProblem(alloc::format!("bad layer widths {dims:?}")));
        }
        net.set_params(params)?;
        Ok(net)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        self.forward_batch(&x).column(0).iter().copied().collect()
    }

    /// Columns of `x` are inputs; columns of the result are Q-vectors.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &a;
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Mean squared error between `Q(s_k, a_k)` and `targets[k]`, with its
    /// exact gradient.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, actions: &[usize], targets: &[f64]) -> (f64, Gradients) {
        let batch = x.ncols();
        let last = self.layers.len() - 1;
        let mut acts = vec![x.clone()];
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &acts[i];
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let q = &acts[last + 1];
        let mut delta = DMatrix::zeros(q.nrows(), batch);
        let mut loss = 0.0;
        for k in 0..batch {
            let err = q[(actions[k], k)] - targets[k];
            loss += err * err;
            delta[(actions[k], k)] = 2.0 * err / batch as f64;
        }
        loss /= batch as f64;

        let mut gw = vec![DMatrix::zeros(0, 0); self.layers.len()];
        let mut gb = vec![DVector::zeros(0); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            gw[i] = &delta * acts[i].transpose();
            gb[i] = delta.column_sum();
            if i > 0 {
                let mut prev = self.layers[i].w.transpose() * &delta;
                // ReLU derivative from the stored post-activation.
                prev.zip_apply(&acts[i], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = prev;
            }
        }
        (loss, Gradients { w: gw, b: gb })
    }
}

/// Adam with the usual moment parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let g = grads.flatten();
        let mut p = net.params();
        for k in 0..p.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g[k] * g[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            p[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        // Lengths match by construction.
        let _ = net.set_params(&p);
    }
}

// ---------------------------------------------------------------- replay

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<bool>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<bool>,
    pub next_valid: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Up to `k` distinct transitions, uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<&Transition> {
        let k = k.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), k)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

// ---------------------------------------------------------------- policy

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub eps0: f64,
    pub floor: f64,
    pub decay: f64,
}

impl ExplorationSchedule {
    pub fn new(decay: f64) -> Self {
        ExplorationSchedule {
            eps0: 0.9,
            floor: 0.1,
            decay,
        }
    }

    /// `0.5` up to seven qubits, `0.95` beyond.
    pub fn for_size(n: usize) -> Self {
        ExplorationSchedule::new(if n <= 7 { 0.5 } else { 0.95 })
    }

    /// `max(floor, decay^e * eps0)`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let e = i32::try_from(episode).unwrap_or(i32::MAX);
        (self.decay.powi(e) * self.eps0).max(self.floor)
    }
}

fn to_input(bits: &[bool]) -> Vec<f64> {
    bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

fn masked_argmax(q: &[f64], valid: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in q.iter().zip(valid).enumerate() {
        if ok && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// ε-greedy over valid actions.
pub fn dqn_select_action<R: Rng + ?Sized>(
    state: &[bool],
    valid: &[bool],
    net: &QNetwork,
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    let choices: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    if choices.is_empty() {
        return Err(Error::NoValidAction);
    }
    if rng.random::<f64>() < eps {
        return Ok(choices[rng.random_range(0..choices.len())]);
    }
    let q = net.forward(&to_input(state));
    masked_argmax(&q, valid).ok_or(Error::NoValidAction)
}

/// `r + discount * Q_target(s', argmax_{valid a'} Q_online(s', a'))`.
pub fn double_dqn_targets(online: &QNetwork, target: &QNetwork, batch: &[&Transition], discount: f64) -> Vec<f64> {
    if batch.is_empty() {
        return Vec::new();
    }
    let s = batch[0].next_state.len();
    let x = DMatrix::from_fn(s, batch.len(), |i, k| if batch[k].next_state[i] { 1.0 } else { 0.0 });
    let q_on = online.forward_batch(&x);
    let q_tg = target.forward_batch(&x);
    batch
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let col: Vec<f64> = q_on.column(k).iter().copied().collect();
            let bootstrap = masked_argmax(&col, &t.next_valid).map_or(0.0, |a| q_tg[(a, k)]);
            t.reward + discount * bootstrap
        })
        .collect()
}

/// One optimizer step on `batch`. Returns the loss before the step.
pub fn dqn_train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    opt: &mut Adam,
    discount: f64,
    update: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::MalformedProblem("empty training batch".into()));
    }
    let targets = double_dqn_targets(net, target, batch, discount);
    let s = batch[0].state.len();
    let x = DMatrix::from_fn(s, batch.len(), |i, k| if batch[k].state[i] { 1.0 } else { 0.0 });
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = net.loss_and_gradients(&x, &actions, &targets);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { loss, update });
    }
    opt.step(net, &grads);
    Ok(loss)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub lr: f64,
    pub discount: f64,
    /// Replay batch, in episodes' worth of transitions.
    pub replay_episodes: usize,
    /// Learning starts after this many episodes' worth of visits.
    pub learn_start_episodes: usize,
    pub target_update_episodes: usize,
    /// Optimizer minibatch; each replay batch is swept once per episode.
    pub minibatch: usize,
    pub replay_capacity_episodes: usize,
    pub schedule: ExplorationSchedule,
    pub max_episodes: usize,
    /// Greedy evaluation reward that counts as converged.
    pub convergence_reward: f64,
    pub stop_on_convergence: bool,
    /// Stop as soon as any visited state scores at least this.
    pub stop_on_visit_reward: Option<f64>,
}

impl DqnConfig {
    pub fn for_size(n: usize) -> Self {
        DqnConfig {
            lr: 5e-3,
            discount: 0.9,
            replay_episodes: 20,
            learn_start_episodes: 5,
            target_update_episodes: 5,
            minibatch: 32,
            replay_capacity_episodes: 200,
            schedule: ExplorationSchedule::for_size(n),
            max_episodes: 400,
            convergence_reward: 0.95,
            stop_on_convergence: true,
            stop_on_visit_reward: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Final-state reward of the greedy evaluation after each episode.
    pub eval_rewards: Vec<f64>,
    pub losses: Vec<f64>,
    /// Episodes trained when the evaluation reward first reached the threshold.
    pub converged_after: Option<usize>,
    pub best_state: Option<ConstraintSet>,
    pub best_reward: f64,
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub config: DqnConfig,
    opt: Adam,
    replay: ReplayBuffer,
    updates: usize,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(pool: &CandidatePool, config: DqnConfig, rng: &mut R) -> Result<Self> {
        let online = QNetwork::for_pool(pool, rng)?;
        Ok(DqnAgent::from_network(online, config))
    }

    /// Fresh optimizer and replay around given weights.
    pub fn from_network(online: QNetwork, config: DqnConfig) -> Self {
        DqnAgent {
            target: online.clone(),
            opt: Adam::new(config.lr, online.param_count()),
            online,
            config,
            replay: ReplayBuffer::new(1),
            updates: 0,
        }
    }

    fn check_pool(&self, pool: &CandidatePool) -> Result<()> {
        let want = vec![pool.len(), pool.action_count()];
        let have = vec![self.online.inputs(), self.online.outputs()];
        if want != have {
            return Err(Error::DimensionMismatch {
                expected: have,
                got: want,
            });
        }
        Ok(())
    }

    /// Runs one greedy episode and returns the final state and its reward.
    pub fn greedy_episode<S: BoundStore>(&self, env: &mut Environment<S>) -> Result<(ConstraintSet, f64)> {
        let steps = self.greedy_trajectory(env)?;
        let reward = steps.last().map_or(0.0, |s| s.reward);
        Ok((env.state().clone(), reward))
    }

    /// Step records of one greedy episode from the bottom state.
    pub fn greedy_trajectory<S: BoundStore>(&self, env: &mut Environment<S>) -> Result<Vec<StepRecord>> {
        env.reset();
        let mut steps = Vec::with_capacity(env.config().length);
        for _ in 0..env.config().length {
            let bits = env.encode(env.state());
            let valid = env.valid_actions();
            let q = self.online.forward(&to_input(&bits));
            let a = masked_argmax(&q, &valid).ok_or(Error::NoValidAction)?;
            steps.push(env.step_index(a)?);
        }
        Ok(steps)
    }

    pub fn train<S: BoundStore, R: Rng + ?Sized>(
        &mut self,
        env: &mut Environment<S>,
        rng: &mut R,
    ) -> Result<TrainOutcome> {
        self.check_pool(env.pool())?;
        let cfg = self.config;
        let len = env.config().length;
        self.replay = ReplayBuffer::new(cfg.replay_capacity_episodes * len);
        let batch_size = cfg.replay_episodes * len;
        let learn_start = cfg.learn_start_episodes * len;
        let mut out = TrainOutcome::default();
        let mut visited = 0usize;

        'episodes: for e in 0..cfg.max_episodes {
            let eps = cfg.schedule.epsilon(e);
            env.reset();
            for _ in 0..len {
                let state = env.encode(env.state());
                let valid = env.valid_actions();
                let a = dqn_select_action(&state, &valid, &self.online, eps, rng)?;
                let rec = env.step_index(a)?;
                visited += 1;
                let next_valid = env.valid_actions();
                self.replay.push(Transition {
                    state,
                    action: a,
                    reward: rec.reward,
                    next_state: rec.after,
                    next_valid,
                });
                if cfg.stop_on_visit_reward.is_some_and(|r| rec.reward >= r) {
                    out.best_state = Some(env.state().clone());
                    out.best_reward = rec.reward;
                    break 'episodes;
                }
            }
            if visited >= learn_start {
                let batch = self.replay.sample(batch_size, rng);
                for chunk in batch.chunks(cfg.minibatch.max(1)) {
                    let loss = dqn_train_step(
                        &mut self.online,
                        &self.target,
                        chunk,
                        &mut self.opt,
                        cfg.discount,
                        self.updates,
                    )?;
                    self.updates += 1;
                    out.losses.push(loss);
                }
            }
            if (e + 1) % cfg.target_update_episodes.max(1) == 0 {
                self.target = self.online.clone();
            }
            let (state, r) = self.greedy_episode(env)?;
            out.eval_rewards.push(r);
            if r > out.best_reward || out.best_state.is_none() {
                out.best_reward = r;
                out.best_state = Some(state);
            }
            if out.converged_after.is_none() && r >= cfg.convergence_reward {
                out.converged_after = Some(e + 1);
                if cfg.stop_on_convergence {
                    break;
                }
            }
            if cfg.stop_on_visit_reward.is_some_and(|t| r >= t) {
                break;
            }
        }
        Ok(out)
    }
}

/// Warm start: the trained weights (online and target) seed a fresh run
/// on a problem with the same candidate pool shape.
pub fn transfer(agent: &DqnAgent, pool: &CandidatePool, config: DqnConfig) -> Result<DqnAgent> {
    agent.check_pool(pool)?;
    let mut fresh = DqnAgent::from_network(agent.online.clone(), config);
    fresh.target = agent.target.clone();
    Ok(fresh)
}

// ---------------------------------------------------------------- baselines

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_state: ConstraintSet,
    pub best_reward: f64,
    pub best_beta: f64,
    pub best_p: u64,
    /// States in visiting order, repeats included.
    pub visits: Vec<ConstraintSet>,
}

/// Scores every visited state under the final ledger and picks the best.
fn summarize<S: BoundStore>(env: &mut Environment<S>) -> SearchOutcome {
    let visits = env.take_visits();
    let mut best_state = ConstraintSet::minimal(env.pool().n());
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0u64);
    for c in &visits {
        let (b, _) = env.bound(c);
        let r = env.ledger().score(b.beta, b.p);
        if r > best.0 || (r == best.0 && b.beta > best.1) {
            best = (r, b.beta, b.p);
            best_state = c.clone();
        }
    }
    SearchOutcome {
        best_state,
        best_reward: best.0.max(0.0),
        best_beta: best.1,
        best_p: best.2,
        visits,
    }
}

/// Breadth-first expansion from the bottom state with shuffled child order.
/// Each state is evaluated at most once.
pub fn bfs_search<S: BoundStore, R: Rng + ?Sized>(
    env: &mut Environment<S>,
    max_states: usize,
    stop_at_reward: Option<f64>,
    rng: &mut R,
) -> Result<SearchOutcome> {
    if max_states == 0 {
        return Err(Error::MalformedProblem("max_states must be at least 1".into()));
    }
    env.take_visits();
    let start = env.reset();
    let mut seen: BTreeSet<ConstraintSet> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    let mut evaluated = 0;
    while let Some(c) = queue.pop_front() {
        let (_, r, _) = env.evaluate(&c);
        evaluated += 1;
        if evaluated >= max_states || stop_at_reward.is_some_and(|t| r >= t) {
            break;
        }
        let mut children: Vec<ConstraintSet> = env.pool().neighbors(&c).into_iter().map(|(_, s)| s).collect();
        children.shuffle(rng);
        for s in children {
            if seen.insert(s.clone()) {
                queue.push_back(s);
            }
        }
    }
    Ok(summarize(env))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub temperature: f64,
}

impl McConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::NonFinite(temperature));
        }
        Ok(McConfig { temperature })
    }

    /// Benchmark temperatures: 0.084 for the half budget, 0.097 for the full one.
    pub fn benchmark(high_budget: bool) -> Self {
        McConfig {
            temperature: if high_budget { 0.097 } else { 0.084 },
        }
    }
}

/// `min{1, exp((r_new - r_old) / T)}`.
pub fn acceptance_probability(r_new: f64, r_old: f64, temperature: f64) -> f64 {
    if r_new >= r_old {
        1.0
    } else {
        ((r_new - r_old) / temperature).exp().min(1.0)
    }
}

pub fn metropolis_accept<R: Rng + ?Sized>(r_new: f64, r_old: f64, temperature: f64, rng: &mut R) -> bool {
    let p = acceptance_probability(r_new, r_old, temperature);
    p >= 1.0 || rng.random::<f64>() < p
}

/// Random walk over valid add/remove moves with Metropolis acceptance on
/// rewards. Stops after `max_states` distinct states or when a visited
/// state reaches `stop_at_reward`.
pub fn mc_search<S: BoundStore, R: Rng + ?Sized>(
    env: &mut Environment<S>,
    cfg: McConfig,
    max_states: usize,
    stop_at_reward: Option<f64>,
    rng: &mut R,
) -> Result<SearchOutcome> {
    McConfig::new(cfg.temperature)?;
    if max_states == 0 {
        return Err(Error::MalformedProblem("max_states must be at least 1".into()));
    }
    env.take_visits();
    let mut current = env.reset();
    let mut distinct: BTreeSet<ConstraintSet> = BTreeSet::new();
    let (_, r0, _) = env.evaluate(&current);
    distinct.insert(current.clone());
    let max_proposals = 50 * max_states;
    let mut done = stop_at_reward.is_some_and(|t| r0 >= t);
    let mut proposals = 0;
    while !done && distinct.len() < max_states && proposals < max_proposals {
        proposals += 1;
        let valid = env.pool().valid_actions(&current);
        let moves: Vec<usize> = (0..env.pool().len()).filter(|&i| valid[i]).collect();
        if moves.is_empty() {
            break;
        }
        let a = env
            .pool()
            .action_from_index(&current, moves[rng.random_range(0..moves.len())])?;
        debug_assert!(a.kind != ActionKind::Stay);
        let next = env.pool().apply_action(&current, a)?;
        let (_, r_new, _) = env.evaluate(&next);
        distinct.insert(next.clone());
        let r_old = env.cached_reward(&current).unwrap_or(0.0);
        if stop_at_reward.is_some_and(|t| r_new >= t) {
            done = true;
        }
        if metropolis_accept(r_new, r_old, cfg.temperature, rng) {
            current = next;
        }
    }
    Ok(summarize(env))
}

/// Distinct states visited up to and including the first one whose reward
/// reaches `threshold`. Repeats are not counted.
pub fn first_visits_to_reward<F>(visits: &[ConstraintSet], mut reward_of: F, threshold: f64) -> Option<usize>
where
    F: FnMut(&ConstraintSet) -> f64,
{
    let mut seen: BTreeSet<&ConstraintSet> = BTreeSet::new();
    for c in visits {
        if seen.insert(c) && reward_of(c) >= threshold {
            return Some(seen.len());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(7);
        for trial in 0..20 {
            let s = 2 + trial % 4;
            let a = s + 1;
            let net = QNetwork::new(&q_dims(s, a), &mut r).unwrap();
            let batch = 3;
            let x = DMatrix::from_fn(s, batch, |_, _| r.random_range(-1.0..1.0));
            let actions: Vec<usize> = (0..batch).map(|_| r.random_range(0..a)).collect();
            let targets: Vec<f64> = (0..batch).map(|_| r.random_range(-1.0..1.0)).collect();
            let (_, g) = net.loss_and_gradients(&x, &actions, &targets);
            let g = g.flatten();
            let p0 = net.params();
            let h = 1e-5;
            let mut probe = net.clone();
            let mut worst = 0.0f64;
            for k in 0..p0.len() {
                let mut p = p0.clone();
                p[k] += h;
                probe.set_params(&p).unwrap();
                let up = probe.loss_and_gradients(&x, &actions, &targets).0;
                p[k] -= 2.0 * h;
                probe.set_params(&p).unwrap();
                let down = probe.loss_and_gradients(&x, &actions, &targets).0;
                let fd = (up - down) / (2.0 * h);
                let scale = fd.abs().max(g[k].abs()).max(1e-6);
                worst = worst.max((fd - g[k]).abs() / scale);
            }
            assert!(worst <= 1e-4, "trial {trial}: relative error {worst}");
        }
    }

    #[test]
    fn epsilon_schedule_is_exact() {
        let s = ExplorationSchedule::new(0.5);
        for e in 0..=100 {
            let want = (0.5f64.powi(e as i32) * 0.9).max(0.1);
            assert_eq!(s.epsilon(e), want);
        }
        assert_eq!(ExplorationSchedule::for_size(7).decay, 0.5);
        assert_eq!(ExplorationSchedule::for_size(8).decay, 0.95);
    }

    fn constant_net(s: usize, a: usize, favored: usize, value: f64) -> QNetwork {
        // Zero weights; output bias alone decides the Q-values.
        let dims = q_dims(s, a);
        let mut net = QNetwork::from_params(&dims, &vec![0.0; count(&dims)]).unwrap();
        let last = net.layers.len() - 1;
        net.layers[last].b[favored] = value;
        net
    }

    fn count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    #[test]
    fn greedy_selection_and_masking() {
        let mut r = rng(1);
        let net = constant_net(4, 5, 3, 1.0);
        let state = [false; 4];
        let all = [true; 5];
        assert_eq!(dqn_select_action(&state, &all, &net, 0.0, &mut r).unwrap(), 3);
        let only = [false, true, false, false, false];
        assert_eq!(dqn_select_action(&state, &only, &net, 0.0, &mut r).unwrap(), 1);
        assert_eq!(dqn_select_action(&state, &only, &net, 1.0, &mut r).unwrap(), 1);
        assert!(dqn_select_action(&state, &[false; 5], &net, 0.0, &mut r).is_err());
        let mut counts = [0usize; 5];
        for _ in 0..5000 {
            counts[dqn_select_action(&state, &all, &net, 1.0, &mut r).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (850..1150).contains(&c)), "{counts:?}");
    }

    #[test]
    fn double_dqn_uses_online_argmax_and_target_value() {
        // Online prefers action 0, target values action 0 at 5 and action 1 at 100.
        let online = constant_net(2, 3, 0, 1.0);
        let mut target = constant_net(2, 3, 1, 100.0);
        let last = target.layers.len() - 1;
        target.layers[last].b[0] = 5.0;
        let t = Transition {
            state: vec![false, true],
            action: 2,
            reward: 0.5,
            next_state: vec![true, false],
            next_valid: vec![true, true, true],
        };
        let y = double_dqn_targets(&online, &target, &[&t], 0.9);
        assert!((y[0] - (0.5 + 0.9 * 5.0)).abs() < 1e-12);
        // Masking the online argmax moves the choice to the next-best valid action.
        let masked = Transition {
            next_valid: vec![false, true, true],
            ..t
        };
        let y = double_dqn_targets(&online, &target, &[&masked], 0.9);
        assert!((y[0] - (0.5 + 0.9 * 100.0)).abs() < 1e-12);
    }

    #[test]
    fn regression_to_fixed_targets() {
        let mut r = rng(3);
        let mut net = QNetwork::new(&q_dims(3, 4), &mut r).unwrap();
        let target = net.clone();
        let mut opt = Adam::new(5e-3, net.param_count());
        let zero = Transition {
            state: vec![true, false, true],
            action: 1,
            reward: 0.0,
            next_state: vec![false; 3],
            next_valid: vec![true; 4],
        };
        let one = Transition {
            state: vec![false, true, false],
            action: 2,
            reward: 1.0,
            ..zero.clone()
        };
        let batch = [&zero, &one];
        let first = dqn_train_step(&mut net, &target, &batch, &mut opt, 0.0, 0).unwrap();
        let mut last = first;
        for u in 1..2000 {
            last = dqn_train_step(&mut net, &target, &batch, &mut opt, 0.0, u).unwrap();
        }
        assert!(last < first * 1e-3);
        let q = net.forward(&[0.0, 1.0, 0.0]);
        assert!((q[2] - 1.0).abs() < 1e-2);
        assert!(net.forward(&[1.0, 0.0, 1.0])[1].abs() < 1e-2);
    }

    #[test]
    fn replay_sampling_is_distinct_and_bounded() {
        let mut r = rng(5);
        let mut buf = ReplayBuffer::new(4);
        for i in 0..6 {
            buf.push(Transition {
                state: vec![],
                action: i,
                reward: 0.0,
                next_state: vec![],
                next_valid: vec![],
            });
        }
        assert_eq!(buf.len(), 4);
        let s = buf.sample(10, &mut r);
        assert_eq!(s.len(), 4);
        let mut actions: Vec<usize> = s.iter().map(|t| t.action).collect();
        actions.sort();
        assert_eq!(actions, vec![2, 3, 4, 5]);
    }

    #[test]
    fn acceptance_rules() {
        assert_eq!(acceptance_probability(0.5, 0.4, 0.084), 1.0);
        assert!((acceptance_probability(0.4, 0.5, 0.1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(acceptance_probability(0.0, 1.0, 1e9) > 0.999_999);
        assert!(McConfig::new(0.0).is_err());
        assert_eq!(McConfig::benchmark(false).temperature, 0.084);
    }

    #[test]
    fn metropolis_occupation_ratio() {
        // Two states, each proposing the other.
        let mut r = rng(11);
        let rewards = [0.3, 0.5];
        let t = 0.2;
        let mut counts = [0usize; 2];
        let mut s = 0usize;
        for _ in 0..100_000 {
            let o = 1 - s;
            if metropolis_accept(rewards[o], rewards[s], t, &mut r) {
                s = o;
            }
            counts[s] += 1;
        }
        let ratio = counts[1] as f64 / counts[0] as f64;
        let want = ((rewards[1] - rewards[0]) / t).exp();
        assert!((ratio / want - 1.0).abs() < 0.05, "{ratio} vs {want}");
    }

    #[test]
    fn first_visit_scoring_ignores_repeats() {
        let a = ConstraintSet::minimal(3);
        let b = ConstraintSet::full(3);
        let c = ConstraintSet::parse(3, "[[0,1]]").unwrap();
        let reward = |x: &ConstraintSet| if *x == b { 1.0 } else { 0.0 };
        let log = [a.clone(), c.clone(), b.clone()];
        let noisy = [a.clone(), a.clone(), c.clone(), a.clone(), c, b.clone()];
        assert_eq!(first_visits_to_reward(&log, reward, 0.95), Some(3));
        assert_eq!(first_visits_to_reward(&noisy, reward, 0.95), Some(3));
        assert_eq!(first_visits_to_reward(&[a], reward, 0.95), None);
    }
}
