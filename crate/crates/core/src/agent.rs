//! Tabular sampled learner: replay buffer, target table, ε-mixed regularized
//! greedy exploration and a pluggable Munchausen augmentation.
//!
//! The TD target for a transition `(s, a, r, s', done)` is
//!
//! ```text
//! y = r + ατ·L(a|s) + γ·(1 − done)·⟨π̄(s'), Q̄(s', ·) − τ·L(·|s')⟩
//! ```
//!
//! where `Q̄` is the target table, `π̄` its regularized greedy policy and `L`
//! the augmentation's logarithm of `π̄`. A gradient step on the squared TD
//! error of one table entry is `Q(s, a) ← Q(s, a) + lr·(y − Q(s, a))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::mdp::{greedy_policy, policy_return, Mdp, Policy, QTable};
use crate::munchausen::{Augmentation, EntropicConfig};
use crate::qmath::tsallis_entropy;
use crate::simplex::{q_star_greedy, sample_index, select_action};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform index over stored items.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.items.len())
    }

    /// `n` draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        (0..n).map(|_| self.items[self.sample_index(rng)]).collect()
    }
}

/// Linear decay from `initial` to `final_value` over the first
/// `decay_fraction` of training, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub final_value: f64,
    pub decay_fraction: f64,
}

impl EpsilonSchedule {
    pub fn fixed(epsilon: f64) -> Self {
        EpsilonSchedule { initial: epsilon, final_value: epsilon, decay_fraction: 1.0 }
    }

    pub fn linear(initial: f64, final_value: f64, decay_fraction: f64) -> Self {
        EpsilonSchedule { initial, final_value, decay_fraction }
    }

    pub fn value(&self, step: usize, total_steps: usize) -> f64 {
        let decay_steps = (self.decay_fraction * total_steps as f64).max(1.0);
        let progress = step as f64 / decay_steps;
        if progress >= 1.0 {
            return self.final_value;
        }
        self.initial + (self.final_value - self.initial) * progress
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub entropic: EntropicConfig,
    /// Total environment steps T.
    pub total_steps: usize,
    /// Gradient step every C environment steps.
    pub interaction_period: usize,
    /// Target sync every I environment steps.
    pub update_period: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub epsilon: EpsilonSchedule,
    /// Exact evaluation of the greedy policy every this many steps.
    pub eval_interval: usize,
    /// Episodes are truncated (without a terminal flag) after this many steps.
    pub max_episode_steps: usize,
    pub seed: u64,
}

impl AgentConfig {
    /// Defaults for the gridworld analogs: decaying ε, 4-step interaction
    /// period, tabular learning rate 0.1.
    pub fn grid(entropic: EntropicConfig) -> Self {
        AgentConfig {
            entropic,
            total_steps: 200_000,
            interaction_period: 4,
            update_period: 2048,
            batch_size: 128,
            buffer_capacity: 50_000,
            learning_rate: 0.1,
            epsilon: EpsilonSchedule::linear(1.0, 0.01, 0.1),
            eval_interval: 500,
            max_episode_steps: 256,
            seed: 0,
        }
    }

    /// Defaults for the classic-control analogs: ε fixed at 0.01.
    pub fn classic(entropic: EntropicConfig) -> Self {
        AgentConfig { update_period: 2500, epsilon: EpsilonSchedule::fixed(0.01), ..AgentConfig::grid(entropic) }
    }

    pub fn validate(&self) -> Result<()> {
        self.entropic.validate()?;
        let positive = [
            ("total_steps", self.total_steps),
            ("interaction_period", self.interaction_period),
            ("update_period", self.update_period),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_interval", self.eval_interval),
            ("max_episode_steps", self.max_episode_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0) {
            return Err(config(format!("learning_rate must lie in [0, 1], got {}", self.learning_rate)));
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.initial) || !(0.0..=1.0).contains(&e.final_value) {
            return Err(config("epsilon values must lie in [0, 1]"));
        }
        if !(e.decay_fraction > 0.0 && e.decay_fraction <= 1.0) {
            return Err(config(format!("epsilon decay fraction must lie in (0, 1], got {}", e.decay_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_step: usize,
    /// Exact discounted return of the current greedy policy.
    pub exact_return: f64,
    /// Undiscounted return of the most recently finished episode (0 before
    /// the first one ends).
    pub episode_return: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn final_return(&self) -> Option<f64> {
        self.points.last().map(|p| p.exact_return)
    }

    /// First evaluation step whose exact return reaches `threshold`.
    pub fn first_hit(&self, threshold: f64) -> Option<usize> {
        self.points.iter().find(|p| p.exact_return >= threshold).map(|p| p.env_step)
    }
}

/// Counts logarithm evaluations made while building targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogCounters {
    /// `q_log(π)` evaluations (finite at zero for q* > 1).
    pub q_log: u64,
    /// Of those, evaluations at `π = 0`.
    pub q_log_at_zero: u64,
    /// `ln(π + Δ)` evaluations.
    pub clamped_log: u64,
    /// Natural-log evaluations without Δ at `π = 0`; always zero.
    pub log_of_zero: u64,
}

/// Everything td targets need from one target-table snapshot.
#[derive(Debug, Clone)]
pub struct TargetCache {
    q: QTable,
    log_policy: Vec<f64>,
    bootstrap: Vec<f64>,
}

impl TargetCache {
    pub fn build(target: &QTable, cfg: &EntropicConfig, counters: &mut LogCounters) -> Self {
        let (ns, na) = (target.n_states(), target.n_actions());
        let mut log_policy = Vec::with_capacity(ns * na);
        let mut bootstrap = Vec::with_capacity(ns);
        for s in 0..ns {
            let row = target.row(s);
            let g = q_star_greedy(row, cfg.tau, cfg.idx);
            let expected: f64 = g.policy.iter().zip(row).map(|(p, v)| p * v).sum();
            match cfg.augmentation {
                Augmentation::StandardLog => {
                    counters.clamped_log += na as u64;
                    let logs: Vec<f64> = g.policy.iter().map(|&p| (p + cfg.delta).ln()).collect();
                    let penalty: f64 = g.policy.iter().zip(&logs).map(|(p, l)| p * l).sum();
                    bootstrap.push(expected - cfg.tau * penalty);
                    log_policy.extend(logs);
                }
                Augmentation::QLog | Augmentation::None => {
                    counters.q_log += na as u64;
                    counters.q_log_at_zero += g.policy.iter().filter(|&&p| p == 0.0).count() as u64;
                    bootstrap.push(expected + cfg.tau * tsallis_entropy(&g.policy, cfg.idx));
                    log_policy.extend(g.log_policy);
                }
            }
        }
        TargetCache { q: target.clone(), log_policy, bootstrap }
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }

    #[inline]
    pub fn target(&self, t: &Transition, cfg: &EntropicConfig, gamma: f64) -> f64 {
        let na = self.q.n_actions();
        let augmentation = cfg.effective_alpha() * cfg.tau * self.log_policy[t.s * na + t.a];
        let continuation = if t.done { 0.0 } else { gamma * self.bootstrap[t.s_next] };
        t.r + augmentation + continuation
    }
}

/// TD targets for a batch against a target table.
pub fn td_target(batch: &[Transition], target: &QTable, cfg: &EntropicConfig, gamma: f64) -> Vec<f64> {
    let cache = TargetCache::build(target, cfg, &mut LogCounters::default());
    batch.iter().map(|t| cache.target(t, cfg, gamma)).collect()
}

/// Exact return of the ε = 0 regularized greedy policy of `q`.
pub fn evaluate_agent(m: &Mdp, q: &QTable, cfg: &EntropicConfig) -> f64 {
    policy_return(m, &greedy_policy(q, cfg.tau, cfg.idx))
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub curve: LearningCurve,
    pub q: QTable,
    pub counters: LogCounters,
}

/// Step-by-step training loop.
#[derive(Debug, Clone)]
pub struct Learner<'a> {
    m: &'a Mdp,
    cfg: AgentConfig,
    online: QTable,
    target: TargetCache,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    state: usize,
    episode_steps: usize,
    episode_return: f64,
    last_episode_return: f64,
    t: usize,
    syncs: usize,
    counters: LogCounters,
}

impl<'a> Learner<'a> {
    pub fn new(m: &'a Mdp, cfg: AgentConfig) -> Result<Self> {
        cfg.validate()?;
        let online = QTable::zeros(m.n_states(), m.n_actions());
        let mut counters = LogCounters::default();
        let target = TargetCache::build(&online, &cfg.entropic, &mut counters);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = sample_index(m.start(), &mut rng);
        Ok(Learner {
            m,
            cfg,
            online,
            target,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            rng,
            state,
            episode_steps: 0,
            episode_return: 0.0,
            last_episode_return: 0.0,
            t: 0,
            syncs: 0,
            counters,
        })
    }

    pub fn online(&self) -> &QTable {
        &self.online
    }

    /// Mutable access to the online table; targets only change at syncs.
    pub fn online_mut(&mut self) -> &mut QTable {
        &mut self.online
    }

    pub fn target_table(&self) -> &QTable {
        self.target.table()
    }

    pub fn target_cache(&self) -> &TargetCache {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn syncs(&self) -> usize {
        self.syncs
    }

    pub fn counters(&self) -> LogCounters {
        self.counters
    }

    pub fn last_episode_return(&self) -> f64 {
        self.last_episode_return
    }

    pub fn greedy_policy(&self) -> Policy {
        greedy_policy(&self.online, self.cfg.entropic.tau, self.cfg.entropic.idx)
    }

    pub fn evaluate(&self) -> f64 {
        evaluate_agent(self.m, &self.online, &self.cfg.entropic)
    }

    /// One environment step, followed by the periodic update and sync.
    pub fn step(&mut self) {
        let cfg = self.cfg;
        let e = &cfg.entropic;
        self.t += 1;
        let epsilon = cfg.epsilon.value(self.t - 1, cfg.total_steps);
        let g = q_star_greedy(self.online.row(self.state), e.tau, e.idx);
        let a = select_action(&g.policy, epsilon, &mut self.rng);
        let s_next = sample_index(self.m.transition_row(self.state, a), &mut self.rng);
        let r = self.m.reward(self.state, a);
        let done = self.m.is_terminal(s_next);
        self.buffer.push(Transition { s: self.state, a, r, s_next, done });
        self.episode_return += r;
        self.episode_steps += 1;
        if done || self.episode_steps >= cfg.max_episode_steps {
            self.last_episode_return = self.episode_return;
            self.episode_return = 0.0;
            self.episode_steps = 0;
            self.state = sample_index(self.m.start(), &mut self.rng);
        } else {
            self.state = s_next;
        }

        if self.t % cfg.interaction_period == 0 {
            self.update();
        }
        if self.t % cfg.update_period == 0 {
            self.sync();
        }
    }

    fn update(&mut self) {
        let (e, gamma, lr) = (self.cfg.entropic, self.m.gamma(), self.cfg.learning_rate);
        for _ in 0..self.cfg.batch_size {
            let t = self.buffer.get(self.buffer.sample_index(&mut self.rng)).copied().expect("non-empty buffer");
            let y = self.target.target(&t, &e, gamma);
            let q = self.online.get(t.s, t.a);
            self.online.set(t.s, t.a, q + lr * (y - q));
        }
    }

    /// Copies the online table into the target.
    pub fn sync(&mut self) {
        self.target = TargetCache::build(&self.online, &self.cfg.entropic, &mut self.counters);
        self.syncs += 1;
    }

    fn point(&self) -> CurvePoint {
        CurvePoint { env_step: self.t, exact_return: self.evaluate(), episode_return: self.last_episode_return }
    }
}

/// Runs the full loop and evaluates the greedy policy every `eval_interval`
/// steps (plus once before the first step). Deterministic given the seed.
pub fn train_agent(m: &Mdp, cfg: &AgentConfig) -> Result<TrainingRun> {
    let mut learner = Learner::new(m, *cfg)?;
    let mut curve = LearningCurve::default();
    curve.points.push(learner.point());
    while learner.t < cfg.total_steps {
        learner.step();
        if learner.t % cfg.eval_interval == 0 || learner.t == cfg.total_steps {
            curve.points.push(learner.point());
        }
    }
    Ok(TrainingRun { curve, q: learner.online, counters: learner.counters })
}
