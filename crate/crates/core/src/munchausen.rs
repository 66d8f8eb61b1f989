//! Exact dynamic-programming forms of the Munchausen recursions.
//!
//! The augmented recursion (TEMDQN; MDQN at q* = 1) iterates
//!
//! ```text
//! π_{k+1} = greedy_{q*,τ}(Q_k)
//! Q_{k+1} = r + ατ·L_{k+1} + γ P ⟨π_{k+1}, Q_k − τ·L_{k+1}⟩
//! ```
//!
//! with `L = q_log(π)`. The implicit recursion iterates the shifted table
//! `Q″_k = Q_k − ατ·q_log(π_k)` through an explicit divergence penalty and
//! entropy bonus:
//!
//! ```text
//! Q″_{k+1} = r + γ P (⟨π_{k+1}, Q″_k⟩ − ατ·D̃(π_{k+1}‖π_k) + (1−α)τ·S̃(π_{k+1}))
//! ```
//!
//! with `D̃ = tsallis_kl_qlog`. Both start from `Q_0 = 0` and a uniform `π_0`;
//! [`verify_equivalence`] runs them side by side.
//!
//! The log-sparsemax baseline keeps the sparsemax greedy step but uses
//! `ln(π + Δ)` in both the augmentation and the bootstrap.

use std::fmt::Write as _;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::mdp::{policy_return, Mdp, Policy, QTable};
use crate::qmath::{
    q_exp, q_log, q_log_unchecked, q_product, stable_log, tsallis_entropy, tsallis_kl_furuichi, tsallis_kl_qlog,
    EntropicIndex,
};
use crate::simplex::{argmax, q_star_greedy, softmax_policy};

/// Which logarithm enters the Munchausen augmentation and the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// No augmentation; the entropy bonus is kept.
    None,
    /// `ln(π + Δ)`, the mismatched baseline for sparse policies.
    StandardLog,
    /// `q_log(π)` at the configured index.
    QLog,
}

impl Augmentation {
    pub fn name(self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::StandardLog => "standard_log",
            Augmentation::QLog => "q_log",
        }
    }
}

/// Regularization settings shared by the exact recursions and the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropicConfig {
    pub idx: EntropicIndex,
    /// Temperature τ, in reward units.
    pub tau: f64,
    /// Munchausen coefficient α ∈ [0, 1).
    pub alpha: f64,
    /// Clamp Δ for `ln(π + Δ)`.
    pub delta: f64,
    pub augmentation: Augmentation,
}

impl EntropicConfig {
    pub fn new(idx: EntropicIndex, tau: f64, alpha: f64, augmentation: Augmentation) -> Self {
        EntropicConfig { idx, tau, alpha, delta: 1e-8, augmentation }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(config(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.augmentation == Augmentation::StandardLog && !(self.delta > 0.0) {
            return Err(config(format!("delta must be positive for standard_log, got {}", self.delta)));
        }
        if !(self.delta >= 0.0) {
            return Err(config(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    /// Effective Munchausen coefficient; augmentation `none` drops the term.
    pub fn effective_alpha(&self) -> f64 {
        match self.augmentation {
            Augmentation::None => 0.0,
            _ => self.alpha,
        }
    }
}

/// One sweep of an exact recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖Q_{k+1} − Q_k‖_∞`.
    pub residual: f64,
    /// Mean over states of `S̃(π_{k+1})`.
    pub entropy: f64,
    /// Mean over states of the divergence between `π_{k+1}` and `π_k`.
    pub divergence: f64,
    /// Exact discounted return of `π_{k+1}`.
    pub policy_return: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    /// Number of `ln(π + Δ)` evaluations.
    pub clamp_calls: u64,
}

pub const TRACE_CSV_HEADER: &str = "iter,residual,entropy,divergence,return";

impl IterationTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                format_float(r.residual),
                format_float(r.entropy),
                format_float(r.divergence),
                format_float(r.policy_return)
            );
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// 17-significant-digit scientific notation; re-parsing recovers the value exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Divergence between successive policies as reported in traces:
/// `tsallis_kl_qlog`, or `+∞` when it is undefined.
pub(crate) fn log_divergence(p: &[f64], m: &[f64], idx: EntropicIndex) -> f64 {
    tsallis_kl_qlog(p, m, idx).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LogForm {
    QLog,
    Stable(f64),
}

/// Stepper for the augmented recursion `Q_{k+1} = r + ατL + γP⟨π, Q_k − τL⟩`.
#[derive(Debug, Clone)]
pub struct AugmentedRecursion<'a> {
    m: &'a Mdp,
    idx: EntropicIndex,
    tau: f64,
    alpha: f64,
    form: LogForm,
    q: QTable,
    policy: Policy,
    log_policy: Vec<f64>,
    clamp_calls: u64,
    iter: usize,
}

impl<'a> AugmentedRecursion<'a> {
    fn new(m: &'a Mdp, idx: EntropicIndex, tau: f64, alpha: f64, form: LogForm) -> Self {
        let (ns, na) = (m.n_states(), m.n_actions());
        let uniform = 1.0 / na as f64;
        let log_uniform = match form {
            LogForm::QLog => q_log_unchecked(uniform, idx),
            LogForm::Stable(delta) => (uniform + delta).ln(),
        };
        AugmentedRecursion {
            m,
            idx,
            tau,
            alpha,
            form,
            q: QTable::zeros(ns, na),
            policy: Policy::uniform(ns, na),
            log_policy: vec![log_uniform; ns * na],
            clamp_calls: 0,
            iter: 0,
        }
    }

    /// TEMDQN recursion; requires `augmentation = q_log`.
    pub fn temdqn(m: &'a Mdp, cfg: &EntropicConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.augmentation != Augmentation::QLog {
            return Err(config(format!("temdqn recursion needs q_log augmentation, got {}", cfg.augmentation.name())));
        }
        Ok(Self::new(m, cfg.idx, cfg.tau, cfg.alpha, LogForm::QLog))
    }

    /// Sparsemax greedy step with the standard-log augmentation.
    pub fn log_sparsemax(m: &'a Mdp, cfg: &EntropicConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.augmentation != Augmentation::StandardLog {
            return Err(config("log-sparsemax recursion needs standard_log augmentation"));
        }
        if cfg.idx.q_star() != 2.0 {
            return Err(config(format!("log-sparsemax recursion needs q* = 2, got {}", cfg.idx.q_star())));
        }
        Ok(Self::new(m, cfg.idx, cfg.tau, cfg.alpha, LogForm::Stable(cfg.delta)))
    }

    /// `Q_k`.
    pub fn q(&self) -> &QTable {
        &self.q
    }

    /// `π_k`.
    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Logarithm of `π_k` as used by the recursion, flattened row-major.
    pub fn log_policy(&self) -> &[f64] {
        &self.log_policy
    }

    pub fn clamp_calls(&self) -> u64 {
        self.clamp_calls
    }

    pub fn step(&mut self) -> TraceRecord {
        let (ns, na) = (self.m.n_states(), self.m.n_actions());
        let mut probs = Vec::with_capacity(ns * na);
        let mut logs = Vec::with_capacity(ns * na);
        let mut bootstrap = vec![0.0; ns];
        let mut entropy = 0.0;
        let mut divergence = 0.0;
        for (s, boot) in bootstrap.iter_mut().enumerate() {
            let q_row = self.q.row(s);
            let g = q_star_greedy(q_row, self.tau, self.idx);
            let log_row = match self.form {
                LogForm::QLog => g.log_policy,
                LogForm::Stable(delta) => {
                    self.clamp_calls += na as u64;
                    stable_log(&g.policy, delta)
                }
            };
            let expected_q: f64 = g.policy.iter().zip(q_row).map(|(p, v)| p * v).sum();
            let s_entropy = tsallis_entropy(&g.policy, self.idx);
            *boot = match self.form {
                // −τ⟨π, q_log π⟩ is τ·S̃(π)
                LogForm::QLog => expected_q + self.tau * s_entropy,
                LogForm::Stable(_) => {
                    expected_q - self.tau * g.policy.iter().zip(&log_row).map(|(p, l)| p * l).sum::<f64>()
                }
            };
            entropy += s_entropy;
            let previous_logs = &self.log_policy[s * na..][..na];
            divergence +=
                g.policy.iter().zip(log_row.iter().zip(previous_logs)).map(|(p, (l1, l0))| p * (l1 - l0)).sum::<f64>();
            probs.extend_from_slice(&g.policy);
            logs.extend(log_row);
        }
        let mut next = QTable::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                let augmented = self.m.reward(s, a) + self.alpha * self.tau * logs[s * na + a];
                next.set(s, a, augmented + self.m.gamma() * self.m.expected_next(s, a, &bootstrap));
            }
        }
        self.iter += 1;
        let policy = Policy::from_flat(ns, na, probs);
        let record = TraceRecord {
            iter: self.iter,
            residual: next.sup_distance(&self.q),
            entropy: entropy / ns as f64,
            divergence: divergence / ns as f64,
            policy_return: policy_return(self.m, &policy),
        };
        self.q = next;
        self.policy = policy;
        self.log_policy = logs;
        record
    }

    fn run(mut self, iters: usize) -> (QTable, Policy, IterationTrace) {
        let mut trace = IterationTrace::default();
        for _ in 0..iters {
            trace.push(self.step());
        }
        trace.clamp_calls = self.clamp_calls;
        (self.q, self.policy, trace)
    }
}

/// Stepper for the explicit divergence-regularized recursion on `Q″`.
#[derive(Debug, Clone)]
pub struct ImplicitRecursion<'a> {
    m: &'a Mdp,
    idx: EntropicIndex,
    tau: f64,
    alpha: f64,
    q_shifted: QTable,
    policy: Policy,
    iter: usize,
}

impl<'a> ImplicitRecursion<'a> {
    pub fn new(m: &'a Mdp, cfg: &EntropicConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.augmentation != Augmentation::QLog {
            return Err(config("implicit recursion needs q_log augmentation"));
        }
        let (ns, na) = (m.n_states(), m.n_actions());
        let policy = Policy::uniform(ns, na);
        let shift = cfg.alpha * cfg.tau * q_log(1.0 / na as f64, cfg.idx)?;
        // Q″_0 = Q_0 − ατ q_log(π_0) with Q_0 = 0
        let q_shifted = QTable::from_values(ns, na, vec![0.0 - shift; ns * na]);
        Ok(ImplicitRecursion { m, idx: cfg.idx, tau: cfg.tau, alpha: cfg.alpha, q_shifted, policy, iter: 0 })
    }

    /// `Q″_k`.
    pub fn q_shifted(&self) -> &QTable {
        &self.q_shifted
    }

    /// `π_k`.
    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn step(&mut self) -> Result<TraceRecord> {
        let (ns, na) = (self.m.n_states(), self.m.n_actions());
        let at = self.alpha * self.tau;
        let mut probs = Vec::with_capacity(ns * na);
        let mut bootstrap = vec![0.0; ns];
        let mut entropy = 0.0;
        let mut divergence = 0.0;
        for (s, boot) in bootstrap.iter_mut().enumerate() {
            let shifted_row = self.q_shifted.row(s);
            let previous = self.policy.row(s);
            let mut q_row = Vec::with_capacity(na);
            for (v, &p) in shifted_row.iter().zip(previous) {
                q_row.push(v + at * q_log(p, self.idx)?);
            }
            let g = q_star_greedy(&q_row, self.tau, self.idx);
            let kl = tsallis_kl_qlog(&g.policy, previous, self.idx)?;
            let s_entropy = tsallis_entropy(&g.policy, self.idx);
            let expected: f64 = g.policy.iter().zip(shifted_row).map(|(p, v)| p * v).sum();
            *boot = expected - at * kl + (1.0 - self.alpha) * self.tau * s_entropy;
            entropy += s_entropy;
            divergence += kl;
            probs.extend_from_slice(&g.policy);
        }
        let next = self.m.backup(&bootstrap);
        self.iter += 1;
        let policy = Policy::from_flat(ns, na, probs);
        let record = TraceRecord {
            iter: self.iter,
            residual: next.sup_distance(&self.q_shifted),
            entropy: entropy / ns as f64,
            divergence: divergence / ns as f64,
            policy_return: policy_return(self.m, &policy),
        };
        self.q_shifted = next;
        self.policy = policy;
        Ok(record)
    }
}

/// Munchausen value iteration with softmax greedy steps (q* = 1).
///
/// Runs the same code as [`temdqn_iterate`]; the logarithm is the exact
/// log-softmax, so `delta` is not used.
pub fn mdqn_iterate(m: &Mdp, cfg: &EntropicConfig, iters: usize) -> Result<(QTable, Policy, IterationTrace)> {
    if !cfg.idx.is_shannon() {
        return Err(config(format!("MDQN needs q* = 1, got {}", cfg.idx.q_star())));
    }
    if cfg.augmentation == Augmentation::None {
        return Err(config("MDQN needs a log augmentation"));
    }
    let cfg = EntropicConfig { augmentation: Augmentation::QLog, ..*cfg };
    temdqn_iterate(m, &cfg, iters)
}

/// Tsallis-entropy Munchausen value iteration, `iters` sweeps.
pub fn temdqn_iterate(m: &Mdp, cfg: &EntropicConfig, iters: usize) -> Result<(QTable, Policy, IterationTrace)> {
    Ok(AugmentedRecursion::temdqn(m, cfg)?.run(iters))
}

/// Sparsemax greedy step with `ln(π + Δ)` in both augmentation and bootstrap.
pub fn log_sparsemax_mdqn_iterate(
    m: &Mdp,
    cfg: &EntropicConfig,
    iters: usize,
) -> Result<(QTable, Policy, IterationTrace)> {
    Ok(AugmentedRecursion::log_sparsemax(m, cfg)?.run(iters))
}

/// Explicit recursion on `Q″`; returns `Q″`, the last policy and the trace.
pub fn implicit_iterate(m: &Mdp, cfg: &EntropicConfig, iters: usize) -> Result<(QTable, Policy, IterationTrace)> {
    let mut rec = ImplicitRecursion::new(m, cfg)?;
    let mut trace = IterationTrace::default();
    for _ in 0..iters {
        trace.push(rec.step()?);
    }
    Ok((rec.q_shifted, rec.policy, trace))
}

/// Largest `|Q_k − ατ·q_log(π_k) − Q″_k|` over `k = 1..=iters` and all
/// state-action pairs, running both recursions from the same start.
pub fn verify_equivalence(m: &Mdp, cfg: &EntropicConfig, iters: usize) -> Result<f64> {
    let mut augmented = AugmentedRecursion::temdqn(m, cfg)?;
    let mut implicit = ImplicitRecursion::new(m, cfg)?;
    let at = cfg.alpha * cfg.tau;
    let mut worst: f64 = 0.0;
    for _ in 0..iters {
        augmented.step();
        implicit.step()?;
        let q = augmented.q().values();
        let logs = augmented.log_policy();
        let shifted = implicit.q_shifted().values();
        for i in 0..q.len() {
            let deviation = (q[i] - at * logs[i] - shifted[i]).abs();
            if deviation.is_nan() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(deviation);
        }
    }
    Ok(worst)
}

/// Averaging baselines whose greedy step uses the running mean of past Q's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingVariant {
    /// Speedy Q-learning: softmax of the mean at temperature τ/k.
    Sql,
    /// Momentum value iteration: argmax of the mean.
    Movi,
}

/// Runs SQL or MoVI for `iters` greedy steps and returns the last policy.
///
/// `Q_1 = r`; for `k ≥ 1` the greedy step acts on `Ā_k = (1/k) Σ_{j≤k} Q_j`
/// and `Q_{k+1} = r + γ P ⟨π_{k+1}, Q_k⟩`. Trace entropy and divergence are
/// measured with the q* = 2 forms, which stay finite for deterministic
/// policies.
pub fn averaged_baseline_iterate(
    m: &Mdp,
    variant: AveragingVariant,
    tau: f64,
    iters: usize,
) -> Result<(Policy, IterationTrace)> {
    if variant == AveragingVariant::Sql && !(tau > 0.0) {
        return Err(config(format!("SQL needs a positive temperature, got {tau}")));
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut q = m.backup(&vec![0.0; ns]);
    let mut sum = q.clone();
    let mut policy = Policy::uniform(ns, na);
    let mut trace = IterationTrace::default();
    for k in 1..=iters {
        let mut probs = Vec::with_capacity(ns * na);
        let mut entropy = 0.0;
        let mut divergence = 0.0;
        for s in 0..ns {
            let mean: Vec<f64> = sum.row(s).iter().map(|v| v / k as f64).collect();
            let row = match variant {
                AveragingVariant::Sql => softmax_policy(&mean, tau / k as f64).policy.into_inner(),
                AveragingVariant::Movi => {
                    let mut row = vec![0.0; na];
                    row[argmax(&mean)] = 1.0;
                    row
                }
            };
            entropy += tsallis_entropy(&row, EntropicIndex::SPARSE);
            divergence += log_divergence(&row, policy.row(s), EntropicIndex::SPARSE);
            probs.extend(row);
        }
        let next_policy = Policy::from_flat(ns, na, probs);
        let values: Vec<f64> =
            (0..ns).map(|s| next_policy.row(s).iter().zip(q.row(s)).map(|(p, v)| p * v).sum()).collect();
        let next = m.backup(&values);
        trace.push(TraceRecord {
            iter: k,
            residual: next.sup_distance(&q),
            entropy: entropy / ns as f64,
            divergence: divergence / ns as f64,
            policy_return: policy_return(m, &next_policy),
        });
        for (acc, v) in sum.values_mut().iter_mut().zip(next.values()) {
            *acc += v;
        }
        q = next;
        policy = next_policy;
    }
    Ok((policy, trace))
}

/// The three divergence formulas evaluated on one pair of distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceForms {
    pub q_star: f64,
    /// `Σ p (q_log p − q_log m)`.
    pub qlog: f64,
    /// Furuichi form at `q = q*`.
    pub furuichi_same: f64,
    /// Furuichi form at `q = 2 − q*`.
    pub furuichi_dual: f64,
}

pub fn divergence_forms(p: &[f64], m: &[f64], idx: EntropicIndex) -> Result<DivergenceForms> {
    Ok(DivergenceForms {
        q_star: idx.q_star(),
        qlog: tsallis_kl_qlog(p, m, idx)?,
        furuichi_same: tsallis_kl_furuichi(p, m, idx.q_star())?,
        furuichi_dual: tsallis_kl_furuichi(p, m, idx.q())?,
    })
}

/// Discrepancy summary for one q* over random distribution pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub q_star: f64,
    pub samples: usize,
    pub max_abs_diff_same: f64,
    pub mean_abs_diff_same: f64,
    pub max_abs_diff_dual: f64,
    pub mean_abs_diff_dual: f64,
    /// Reference pair `p = (0.9, 0.1)`, `m = (0.5, 0.5)`.
    pub reference: DivergenceForms,
}

impl DivergenceRow {
    /// Largest gap between the q-log form and either Furuichi form.
    pub fn max_abs_diff(&self) -> f64 {
        self.max_abs_diff_same.max(self.max_abs_diff_dual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub seed: u64,
    pub n_actions: usize,
    pub rows: Vec<DivergenceRow>,
}

impl DivergenceReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "q_star,samples,max_abs_diff_same,mean_abs_diff_same,max_abs_diff_dual,mean_abs_diff_dual,ref_qlog,ref_furuichi_same,ref_furuichi_dual\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.q_star,
                r.samples,
                format_float(r.max_abs_diff_same),
                format_float(r.mean_abs_diff_same),
                format_float(r.max_abs_diff_dual),
                format_float(r.mean_abs_diff_dual),
                format_float(r.reference.qlog),
                format_float(r.reference.furuichi_same),
                format_float(r.reference.furuichi_dual)
            );
        }
        out
    }
}

/// Draws a full-support Dirichlet(1) distribution.
pub fn random_distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Tabulates the q-log divergence against both Furuichi readings for random
/// full-support pairs. Deterministic given `seed`.
pub fn compare_divergence_forms(
    samples: usize,
    q_star_list: &[f64],
    n_actions: usize,
    seed: u64,
) -> Result<DivergenceReport> {
    if n_actions == 0 {
        return Err(domain("need at least one action"));
    }
    let mut rows = Vec::with_capacity(q_star_list.len());
    for &q_star in q_star_list {
        let idx = EntropicIndex::new(q_star)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut max_same, mut sum_same, mut max_dual, mut sum_dual) = (0.0f64, 0.0, 0.0f64, 0.0);
        for _ in 0..samples {
            let p = random_distribution(n_actions, &mut rng);
            let m = random_distribution(n_actions, &mut rng);
            let f = divergence_forms(&p, &m, idx)?;
            let same = (f.qlog - f.furuichi_same).abs();
            let dual = (f.qlog - f.furuichi_dual).abs();
            max_same = max_same.max(same);
            max_dual = max_dual.max(dual);
            sum_same += same;
            sum_dual += dual;
        }
        let n = samples.max(1) as f64;
        rows.push(DivergenceRow {
            q_star,
            samples,
            max_abs_diff_same: max_same,
            mean_abs_diff_same: sum_same / n,
            max_abs_diff_dual: max_dual,
            mean_abs_diff_dual: sum_dual / n,
            reference: divergence_forms(&[0.9, 0.1], &[0.5, 0.5], idx)?,
        });
    }
    Ok(DivergenceReport { seed, n_actions, rows })
}

/// Expansion of `q_exp(ΣQ_j)^(q*−1)` against `(Π q_exp(Q_j))^(q*−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoAverageReport {
    pub q_star: f64,
    pub k: usize,
    /// `q_exp(Σ Q_j)^(q*−1)`.
    pub lhs: f64,
    /// `(Π q_exp(Q_j))^(q*−1)`.
    pub product: f64,
    /// `Σ_{j≥2} (q*−1)^j e_j(Q)`.
    pub residual: f64,
    /// `lhs − (product + residual)`.
    pub gap_plus: f64,
    /// `lhs − (product − residual)`.
    pub gap_minus: f64,
    /// q*-product of the factors `q_exp(Q_j)`.
    pub chained: f64,
    /// `q_exp(Σ Q_j)`.
    pub exp_of_sum: f64,
    /// True when some argument falls in the clipped region of `q_exp`.
    pub clipped: bool,
}

/// Elementary symmetric polynomials `e_0..=e_k` of `values`.
pub fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e
}

pub fn pseudo_average_audit(values: &[f64], q_star: f64) -> Result<PseudoAverageReport> {
    let idx = EntropicIndex::new(q_star)?;
    if values.is_empty() {
        return Err(domain("pseudo-average audit needs at least one value"));
    }
    let k_minus = idx.q_star() - 1.0;
    let total: f64 = values.iter().sum();
    let clipped =
        !idx.is_shannon() && (values.iter().any(|&v| 1.0 + k_minus * v <= 0.0) || 1.0 + k_minus * total <= 0.0);
    let power = |x: f64| if idx.is_shannon() { 1.0 } else { x.powf(k_minus) };
    let exp_of_sum = q_exp(total, idx);
    let factors: Vec<f64> = values.iter().map(|&v| q_exp(v, idx)).collect();
    let product_raw: f64 = factors.iter().product();
    let e = elementary_symmetric(values);
    let residual: f64 = (2..=values.len()).map(|j| k_minus.powi(j as i32) * e[j]).sum();
    let lhs = power(exp_of_sum);
    let product = power(product_raw);
    let chained = factors[1..].iter().fold(factors[0], |acc, &f| q_product(acc, f, idx));
    Ok(PseudoAverageReport {
        q_star,
        k: values.len(),
        lhs,
        product,
        residual,
        gap_plus: lhs - (product + residual),
        gap_minus: lhs - (product - residual),
        chained,
        exp_of_sum,
        clipped,
    })
}
