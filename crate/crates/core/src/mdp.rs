//! Finite MDPs, tabular environment generators and exact dynamic programming.
//!
//! Terminal states are absorbing, zero-reward self-loops. Backups never
//! bootstrap through a terminal next state, so a terminal state's value is
//! always zero and regularization bonuses stop accruing once an episode
//! ends. This is the same convention the sampled learner uses for its
//! `done` flag.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::munchausen::{IterationTrace, TraceRecord};
use crate::qmath::{tsallis_entropy, EntropicIndex};
use crate::simplex::{argmax, q_star_greedy};

/// Sweep cap shared by every convergence loop in the crate.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Default sup-norm stopping tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Finite MDP `(S, A, P, r, γ)` with absorbing terminal states and a start
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpLayout", into = "MdpLayout")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: Vec<usize>,
    start: Vec<f64>,
    is_terminal: Vec<bool>,
    /// Non-terminal successors per (s, a), used by every backup.
    continuation: Vec<Vec<(usize, f64)>>,
    r_min: f64,
    r_max: f64,
}

/// On-disk JSON layout: row-major `transition[s][a][s']` and `reward[s][a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpLayout {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub terminal: Vec<usize>,
    /// Start distribution; uniform over non-terminal states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl TryFrom<MdpLayout> for Mdp {
    type Error = Error;

    fn try_from(layout: MdpLayout) -> Result<Self> {
        Mdp::new(
            layout.n_states,
            layout.n_actions,
            layout.transition,
            layout.reward,
            layout.gamma,
            layout.terminal,
            layout.start,
        )
    }
}

impl From<Mdp> for MdpLayout {
    fn from(m: Mdp) -> Self {
        MdpLayout {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward: m.reward,
            gamma: m.gamma,
            terminal: m.terminal,
            start: Some(m.start),
        }
    }
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        mut terminal: Vec<usize>,
        start: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(config("MDP needs at least one state and one action"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(config(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(config(format!("reward has {} entries, expected {}", reward.len(), n_states * n_actions)));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(config(format!("discount must lie in (0, 1), got {gamma}")));
        }
        if let Some(bad) = reward.iter().find(|r| !r.is_finite()) {
            return Err(config(format!("non-finite reward {bad}")));
        }
        for (row_index, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(config(format!("transition row {row_index} has an entry outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(config(format!("transition row {row_index} sums to {total}")));
            }
        }
        terminal.sort_unstable();
        terminal.dedup();
        let mut is_terminal = vec![false; n_states];
        for &t in &terminal {
            if t >= n_states {
                return Err(config(format!("terminal state {t} out of range")));
            }
            is_terminal[t] = true;
            for a in 0..n_actions {
                let row = &transition[(t * n_actions + a) * n_states..][..n_states];
                if row[t] != 1.0 || reward[t * n_actions + a] != 0.0 {
                    return Err(config(format!("terminal state {t} must self-loop with zero reward")));
                }
            }
        }
        let start = match start {
            Some(start) => {
                if start.len() != n_states
                    || start.iter().any(|&p| !(p >= 0.0))
                    || (start.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOLERANCE
                {
                    return Err(config("start distribution is not a probability vector"));
                }
                start
            }
            None => {
                let live = is_terminal.iter().filter(|t| !**t).count();
                if live == 0 {
                    return Err(config("every state is terminal and no start distribution was given"));
                }
                is_terminal.iter().map(|&t| if t { 0.0 } else { 1.0 / live as f64 }).collect()
            }
        };
        let continuation = transition
            .chunks(n_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(next, &p)| p > 0.0 && !is_terminal[next])
                    .map(|(next, &p)| (next, p))
                    .collect()
            })
            .collect();
        let r_min = reward.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Mdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            terminal,
            start,
            is_terminal,
            continuation,
            r_min,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn terminal(&self) -> &[usize] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.is_terminal[s]
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `P(·|s, a)` over all next states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    /// `Σ_{s'} P(s'|s, a) v(s')` over non-terminal `s'`.
    #[inline]
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.continuation[s * self.n_actions + a].iter().map(|&(next, p)| p * v[next]).sum()
    }

    /// `r + γ P v` as a Q-table, bootstrapping only through non-terminal states.
    pub fn backup(&self, v: &[f64]) -> QTable {
        let mut q = QTable::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q.set(s, a, self.reward(s, a) + self.gamma * self.expected_next(s, a, v));
            }
        }
        q
    }

    /// Copy of this MDP with every reward multiplied by `c` and shifted by `shift`
    /// on non-terminal states.
    pub fn with_affine_reward(&self, c: f64, shift: f64) -> Result<Mdp> {
        let reward = self
            .reward
            .iter()
            .enumerate()
            .map(|(i, &r)| if self.is_terminal[i / self.n_actions] { 0.0 } else { c * r + shift })
            .collect();
        Mdp::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            self.terminal.clone(),
            Some(self.start.clone()),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Mdp> {
        serde_json::from_str(text).map_err(|e| config(format!("invalid MDP JSON: {e}")))
    }
}

/// `|S| × |A|` table of action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        QTable { n_states, n_actions, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.n_actions + a] = value;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..][..self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.n_actions..][..self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max_a Q(s, a)` per state.
    pub fn max_values(&self) -> Vec<f64> {
        (0..self.n_states).map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row-stochastic `|S| × |A|` policy matrix. Rows may contain exact zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Policy { n_states: actions.len(), n_actions, probs }
    }

    /// Builds a policy from rows, validating each one.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for row in rows {
            if row.len() != n_actions {
                return Err(config("policy rows have different lengths"));
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(config("policy row is not a probability vector"));
            }
            probs.extend(row);
        }
        Ok(Policy { n_states, n_actions, probs })
    }

    pub(crate) fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Policy { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// First most-probable action per state.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }
}

/// Which tabular analog to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    /// States `0..length`, actions forward/back, reward 1 on entering the last state.
    Chain { length: usize },
    /// Four-action gridworld, start top-left, goal bottom-right with reward 1.
    EmptyGrid { width: usize, height: usize },
    /// Empty grid plus obstacle cells; entering one crashes into a terminal
    /// state with reward −1 with probability `p_obstacle`.
    ObstacleGrid { width: usize, height: usize, obstacles: usize, p_obstacle: f64 },
    /// Dirichlet(1) transitions, uniform [0, 1) rewards, no terminal states.
    Random { n_states: usize, n_actions: usize },
}

/// Full recipe for a tabular environment. Generation is a pure function of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub gamma: f64,
    /// Probability that an action is replaced by a uniformly random one.
    pub slip: f64,
    pub seed: u64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind, gamma: f64) -> Self {
        EnvSpec { kind, gamma, slip: 0.0, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_slip(mut self, slip: f64) -> Self {
        self.slip = slip;
        self
    }
}

/// Grid moves, indexed by action: right, down, left, up.
pub const GRID_MOVES: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

pub fn make_env(spec: &EnvSpec) -> Result<Mdp> {
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(config(format!("slip must lie in [0, 1], got {}", spec.slip)));
    }
    match spec.kind {
        EnvKind::Chain { length } => {
            if length == 0 {
                return Err(config("chain length must be positive"));
            }
            let goal = length - 1;
            let step = |s: usize, a: usize| if a == 0 { (s + 1).min(goal) } else { s.saturating_sub(1) };
            let mut b = Builder::new(length, 2, spec.slip);
            b.fill(step, |next| if next == goal { 1.0 } else { 0.0 }, &[goal]);
            b.finish(spec.gamma, vec![goal], 0)
        }
        EnvKind::EmptyGrid { width, height } => grid(width, height, 0, 0.0, spec),
        EnvKind::ObstacleGrid { width, height, obstacles, p_obstacle } => {
            if !(0.0..=1.0).contains(&p_obstacle) {
                return Err(config(format!("p_obstacle must lie in [0, 1], got {p_obstacle}")));
            }
            grid(width, height, obstacles, p_obstacle, spec)
        }
        EnvKind::Random { n_states, n_actions } => {
            if n_states == 0 || n_actions == 0 {
                return Err(config("random MDP needs positive state and action counts"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
            for _ in 0..n_states * n_actions {
                let draws: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let total: f64 = draws.iter().sum();
                let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
                // put the rounding residue on the largest entry
                let residue = 1.0 - row.iter().sum::<f64>();
                let top = argmax(&row);
                row[top] += residue;
                transition.extend(row);
            }
            let reward = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
            Mdp::new(n_states, n_actions, transition, reward, spec.gamma, vec![], None)
        }
    }
}

fn grid(width: usize, height: usize, obstacles: usize, p_obstacle: f64, spec: &EnvSpec) -> Result<Mdp> {
    if width == 0 || height == 0 {
        return Err(config("grid dimensions must be positive"));
    }
    let cells = width * height;
    let start = 0;
    let goal = cells - 1;
    let free: Vec<usize> = (0..cells).filter(|&c| c != start && c != goal).collect();
    if obstacles > free.len() {
        return Err(config(format!("{obstacles} obstacles do not fit in a {width}x{height} grid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_obstacle = vec![false; cells];
    for &c in free.choose_multiple(&mut rng, obstacles) {
        is_obstacle[c] = true;
    }
    let crash = cells;
    let n_states = if obstacles > 0 { cells + 1 } else { cells };
    let mut terminal = vec![goal];
    if obstacles > 0 {
        terminal.push(crash);
    }

    let mut b = Builder::new(n_states, 4, spec.slip);
    let target = |s: usize, a: usize| -> usize {
        let (x, y) = ((s % width) as i64, (s / width) as i64);
        let (dx, dy) = GRID_MOVES[a];
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
            s
        } else {
            ny as usize * width + nx as usize
        }
    };
    for s in 0..n_states {
        if s == goal || s == crash {
            for a in 0..4 {
                b.add(s, a, s, 1.0, 0.0);
            }
            continue;
        }
        for a in 0..4 {
            for (d, weight) in b.move_weights(a) {
                let next = target(s, d);
                let arrive = |b: &mut Builder, next: usize, w: f64| {
                    let r = if next == goal { 1.0 } else { 0.0 };
                    b.add(s, a, next, w, r);
                };
                if is_obstacle[next] && next != s {
                    b.add(s, a, crash, weight * p_obstacle, -1.0);
                    arrive(&mut b, next, weight * (1.0 - p_obstacle));
                } else {
                    arrive(&mut b, next, weight);
                }
            }
        }
    }
    b.finish(spec.gamma, terminal, start)
}

/// Accumulates transition mass and expected reward per (s, a).
struct Builder {
    n_states: usize,
    n_actions: usize,
    slip: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl Builder {
    fn new(n_states: usize, n_actions: usize, slip: f64) -> Self {
        Builder {
            n_states,
            n_actions,
            slip,
            transition: vec![0.0; n_states * n_actions * n_states],
            reward: vec![0.0; n_states * n_actions],
        }
    }

    /// Effective action distribution after slipping.
    fn move_weights(&self, a: usize) -> Vec<(usize, f64)> {
        let n = self.n_actions as f64;
        (0..self.n_actions)
            .map(|d| (d, self.slip / n + if d == a { 1.0 - self.slip } else { 0.0 }))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }

    fn add(&mut self, s: usize, a: usize, next: usize, weight: f64, reward: f64) {
        if weight == 0.0 {
            return;
        }
        self.transition[(s * self.n_actions + a) * self.n_states + next] += weight;
        self.reward[s * self.n_actions + a] += weight * reward;
    }

    fn fill(
        &mut self,
        step: impl Fn(usize, usize) -> usize,
        arrival_reward: impl Fn(usize) -> f64,
        terminal: &[usize],
    ) {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if terminal.contains(&s) {
                    self.add(s, a, s, 1.0, 0.0);
                    continue;
                }
                for (d, w) in self.move_weights(a) {
                    let next = step(s, d);
                    self.add(s, a, next, w, arrival_reward(next));
                }
            }
        }
    }

    fn finish(self, gamma: f64, terminal: Vec<usize>, start: usize) -> Result<Mdp> {
        let mut start_dist = vec![0.0; self.n_states];
        start_dist[start] = 1.0;
        Mdp::new(self.n_states, self.n_actions, self.transition, self.reward, gamma, terminal, Some(start_dist))
    }
}

/// Bellman optimality operator `T Q = r + γ P max_a' Q`.
pub fn bellman_optimality(m: &Mdp, q: &QTable) -> QTable {
    m.backup(&q.max_values())
}

/// Plain value iteration to a sup-norm residual below `tol`.
///
/// Returns `Q*` and the deterministic greedy policy (first maximizer).
pub fn value_iteration(m: &Mdp, tol: f64) -> Result<(QTable, Policy)> {
    let mut q = QTable::zeros(m.n_states, m.n_actions);
    for _ in 0..MAX_SWEEPS {
        let next = bellman_optimality(m, &q);
        let residual = next.sup_distance(&q);
        q = next;
        if residual < tol {
            let actions: Vec<usize> = (0..m.n_states).map(|s| argmax(q.row(s))).collect();
            return Ok((q, Policy::deterministic(m.n_actions, &actions)));
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

/// Regularized greedy step on every row of `q`.
pub fn greedy_policy(q: &QTable, tau: f64, idx: EntropicIndex) -> Policy {
    let mut probs = Vec::with_capacity(q.values().len());
    for s in 0..q.n_states() {
        probs.extend_from_slice(&q_star_greedy(q.row(s), tau, idx).policy);
    }
    Policy::from_flat(q.n_states(), q.n_actions(), probs)
}

/// Regularized value iteration: `π_{k+1} = greedy(Q_k)`,
/// `Q_{k+1} = r + γ P V_{k+1}` where `V_{k+1}` is the greedy step's
/// regularized value `⟨π, Q_k⟩ + τ S̃(π)`.
pub fn regularized_value_iteration(
    m: &Mdp,
    idx: EntropicIndex,
    tau: f64,
    tol: f64,
) -> Result<(QTable, Policy, IterationTrace)> {
    if !(tau > 0.0) {
        return Err(config(format!("temperature must be positive, got {tau}")));
    }
    let mut q = QTable::zeros(m.n_states, m.n_actions);
    let mut previous = Policy::uniform(m.n_states, m.n_actions);
    let mut trace = IterationTrace::default();
    for iter in 1..=MAX_SWEEPS {
        let mut values = vec![0.0; m.n_states];
        let mut probs = Vec::with_capacity(m.n_states * m.n_actions);
        let mut entropy = 0.0;
        let mut divergence = 0.0;
        for (s, value) in values.iter_mut().enumerate() {
            let g = q_star_greedy(q.row(s), tau, idx);
            *value = g.value;
            entropy += tsallis_entropy(&g.policy, idx);
            divergence += crate::munchausen::log_divergence(&g.policy, previous.row(s), idx);
            probs.extend_from_slice(&g.policy);
        }
        let policy = Policy::from_flat(m.n_states, m.n_actions, probs);
        let next = m.backup(&values);
        let residual = next.sup_distance(&q);
        trace.push(TraceRecord {
            iter,
            residual,
            entropy: entropy / m.n_states as f64,
            divergence: divergence / m.n_states as f64,
            policy_return: policy_return(m, &policy),
        });
        q = next;
        previous = policy;
        if residual < tol {
            let policy = greedy_policy(&q, tau, idx);
            return Ok((q, policy, trace));
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

/// Exact `Q_π`, the fixed point of `T_π Q = r + γ P ⟨π, Q⟩`, by a direct
/// linear solve of `(I − γ P_π) V = r_π`.
pub fn policy_evaluation(m: &Mdp, policy: &Policy) -> QTable {
    let n = m.n_states;
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        let row = policy.row(s);
        for (a, &pa) in row.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            rhs[s] += pa * m.reward(s, a);
            for &(next, p) in &m.continuation[s * m.n_actions + a] {
                system[(s, next)] -= m.gamma * pa * p;
            }
        }
    }
    // I − γP_π is strictly diagonally dominant for γ < 1, hence invertible.
    let v = system.lu().solve(&rhs).expect("I - gamma P_pi is nonsingular");
    m.backup(v.as_slice())
}

/// `V_π(s) = ⟨π(s), Q_π(s)⟩` per state.
pub fn state_values(q: &QTable, policy: &Policy) -> Vec<f64> {
    (0..q.n_states()).map(|s| q.row(s).iter().zip(policy.row(s)).map(|(v, p)| v * p).sum()).collect()
}

/// Exact expected discounted return of `policy` from the MDP's start distribution.
pub fn policy_return(m: &Mdp, policy: &Policy) -> f64 {
    policy_return_from(m, policy, m.start())
}

pub fn policy_return_from(m: &Mdp, policy: &Policy, start: &[f64]) -> f64 {
    let q = policy_evaluation(m, policy);
    state_values(&q, policy).iter().zip(start).map(|(v, p)| v * p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(length: usize, gamma: f64) -> Mdp {
        make_env(&EnvSpec::new(EnvKind::Chain { length }, gamma)).unwrap()
    }

    fn random(n_states: usize, n_actions: usize, seed: u64) -> Mdp {
        make_env(&EnvSpec::new(EnvKind::Random { n_states, n_actions }, 0.9).with_seed(seed)).unwrap()
    }

    #[test]
    fn chain_constructor() {
        let m = chain(3, 0.9);
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.terminal(), &[2]);
        assert_eq!(m.start(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.reward(1, 0), 1.0);
        assert_eq!(m.reward(0, 0), 0.0);
    }

    #[test]
    fn random_env_is_reproducible() {
        let a = random(6, 3, 7);
        let b = random(6, 3, 7);
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, random(6, 3, 8));
    }

    #[test]
    fn invalid_sizes_are_config_errors() {
        for kind in [
            EnvKind::Chain { length: 0 },
            EnvKind::EmptyGrid { width: 0, height: 3 },
            EnvKind::Random { n_states: 3, n_actions: 0 },
            EnvKind::ObstacleGrid { width: 2, height: 2, obstacles: 3, p_obstacle: 0.5 },
        ] {
            assert!(matches!(make_env(&EnvSpec::new(kind, 0.9)), Err(Error::Config(_))));
        }
        assert!(make_env(&EnvSpec::new(EnvKind::Chain { length: 3 }, 1.0)).is_err());
    }

    #[test]
    fn empty_grid_optimal_value() {
        let m = make_env(&EnvSpec::new(EnvKind::EmptyGrid { width: 4, height: 4 }, 0.99)).unwrap();
        let (q, _) = value_iteration(&m, 1e-12).unwrap();
        // six steps to the goal, reward on the sixth
        let v0 = q.row(0).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((v0 - 0.99f64.powi(5)).abs() < 1e-10);
    }

    #[test]
    fn obstacle_grid_has_crash_state() {
        let spec = EnvSpec::new(EnvKind::ObstacleGrid { width: 4, height: 4, obstacles: 3, p_obstacle: 0.5 }, 0.95)
            .with_seed(2);
        let m = make_env(&spec).unwrap();
        assert_eq!(m.n_states(), 17);
        assert_eq!(m.terminal(), &[15, 16]);
        assert!(m.r_min() < 0.0);
        assert_eq!(make_env(&spec).unwrap(), m);
    }

    #[test]
    fn value_iteration_examples() {
        let m = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.5, vec![], None).unwrap();
        let (q, p) = value_iteration(&m, 1e-12).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-11);
        assert_eq!(p.row(0), &[1.0]);

        let m = chain(3, 0.9);
        let (q, p) = value_iteration(&m, 1e-12).unwrap();
        assert!((q.get(0, 0) - 0.9).abs() < 1e-12);
        assert_eq!(p.greedy_actions()[..2], [0, 0]);
    }

    #[test]
    fn value_iteration_fixed_point() {
        let m = random(8, 3, 1);
        let (q, _) = value_iteration(&m, 1e-11).unwrap();
        assert!(bellman_optimality(&m, &q).sup_distance(&q) < 1e-10);
    }

    #[test]
    fn policy_evaluation_examples() {
        let m = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.5, vec![], None).unwrap();
        let q = policy_evaluation(&m, &Policy::uniform(1, 1));
        assert!((q.get(0, 0) - 2.0).abs() < 1e-14);

        let m = random(7, 3, 4);
        let (q_star, greedy) = value_iteration(&m, 1e-12).unwrap();
        assert!(policy_evaluation(&m, &greedy).sup_distance(&q_star) < 1e-10);

        let rows = (0..7)
            .map(|s| {
                let w: Vec<f64> = (0..3).map(|a| 1.0 + ((s * 3 + a) % 5) as f64).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        let policy = Policy::from_rows(rows).unwrap();
        let q_pi = policy_evaluation(&m, &policy);
        let applied = m.backup(&state_values(&q_pi, &policy));
        assert!(applied.sup_distance(&q_pi) < 1e-12);
    }

    #[test]
    fn policy_return_examples() {
        let m = chain(3, 0.9);
        let (_, greedy) = value_iteration(&m, 1e-12).unwrap();
        assert!((policy_return(&m, &greedy) - 0.9).abs() < 1e-12);

        let uniform = Policy::uniform(m.n_states(), m.n_actions());
        assert!(policy_return(&m, &uniform) <= policy_return(&m, &greedy));

        let scaled = m.with_affine_reward(3.0, 0.0).unwrap();
        let r1 = policy_return(&m, &uniform);
        let r3 = policy_return(&scaled, &uniform);
        assert!((r3 - 3.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn json_layout_roundtrip() {
        let m = random(4, 2, 9);
        let text = m.to_json();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["n_states"], 4);
        assert_eq!(value["transition"].as_array().unwrap().len(), 32);
        assert_eq!(value["reward"].as_array().unwrap().len(), 8);
        assert_eq!(Mdp::from_json(&text).unwrap(), m);

        let bad = text.replace("\"gamma\": 0.9", "\"gamma\": 1.5");
        assert!(Mdp::from_json(&bad).is_err());
    }

    #[test]
    fn terminal_must_self_loop() {
        let err = Mdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0], 0.9, vec![1], None);
        assert!(err.is_err());
    }
}
