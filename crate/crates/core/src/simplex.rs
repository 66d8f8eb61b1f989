//! Regularized greedy operators over the probability simplex.
//!
//! Every operator here solves `max_π ⟨π, q⟩ + τ·S̃(π)` for one action-value
//! row, with `S̃(π) = −⟨π, q_log(π)⟩` at some dual index q*:
//!
//! - q* = 1: [`softmax_policy`], full support.
//! - q* = 2: sparsemax. [`sparsemax_policy`] uses the `½⟨π, 1 − π⟩` entropy
//!   scaling, so `q_star_greedy(q, τ, 2)` equals `sparsemax_policy(q, 2τ)`.
//! - any other q*: `π = q_exp((q/τ − ψ)/q*)` with ψ found by bisection.

use rand::Rng;

use crate::qmath::{q_exp, q_log_unchecked, tsallis_entropy, EntropicIndex, ProbVector};

/// Bisection cap for the general-index normalization.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Residual tolerance on `Σ π(ψ) − 1` for the general-index normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Output of a regularized greedy step on one row.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    pub policy: ProbVector,
    /// q*-logarithm of the policy at the operator's index. Finite everywhere:
    /// at q* = 1 it is the log-softmax, computed without taking `ln` of `π`.
    pub log_policy: Vec<f64>,
    /// Regularized state value `⟨π, q⟩ + τ·S̃(π)`.
    pub value: f64,
    /// Normalization constant, in units of `q/τ`.
    pub psi: f64,
    /// Actions with nonzero probability, ascending.
    pub support: Vec<usize>,
}

/// Boltzmann policy `π ∝ exp(q/τ)` with the log-sum-exp soft value.
pub fn softmax_policy(q: &[f64], tau: f64) -> GreedyResult {
    check_row(q, tau);
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = q.iter().map(|&v| (v - max) / tau).collect();
    let weights: Vec<f64> = shifted.iter().map(|z| z.exp()).collect();
    let total: f64 = weights.iter().sum();
    let log_total = total.ln();
    let policy: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let log_policy = shifted.iter().map(|z| z - log_total).collect();
    let value = max + tau * log_total;
    GreedyResult {
        support: support_of(&policy),
        policy: ProbVector::from_normalized(policy),
        log_policy,
        value,
        psi: value / tau,
    }
}

/// Sparsemax policy `[q/τ − ψ]_+` with the sort-based normalization.
///
/// The support is the set of top-ranked actions satisfying
/// `1 + i·z_(i) > Σ_{j ≤ i} z_(j)` for `z = q/τ` sorted descending. The
/// reported value uses the `τ/2·⟨π, 1 − π⟩` regularizer that this policy
/// maximizes.
pub fn sparsemax_policy(q: &[f64], tau: f64) -> GreedyResult {
    check_row(q, tau);
    let z: Vec<f64> = q.iter().map(|&v| v / tau).collect();
    let (policy, psi) = sparsemax_projection(&z);
    let log_policy = policy.iter().map(|p| p - 1.0).collect();
    let value = inner(&policy, q) + 0.5 * tau * tsallis_entropy(&policy, EntropicIndex::SPARSE);
    GreedyResult { support: support_of(&policy), policy: ProbVector::from_normalized(policy), log_policy, value, psi }
}

/// Euclidean projection of `z` onto the simplex by the sorting rule.
/// Returns the projected vector and the threshold ψ.
fn sparsemax_projection(z: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    // stable: equal entries keep index order
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]));

    let mut cumulative = 0.0;
    let mut support_sum = 0.0;
    let mut support_size = 0;
    for (rank, &a) in order.iter().enumerate() {
        let i = (rank + 1) as f64;
        cumulative += z[a];
        if 1.0 + i * z[a] > cumulative {
            support_size = rank + 1;
            support_sum = cumulative;
        } else {
            break;
        }
    }
    let psi = (support_sum - 1.0) / support_size as f64;
    let mut policy: Vec<f64> = z.iter().map(|&v| (v - psi).max(0.0)).collect();
    renormalize(&mut policy);
    (policy, psi)
}

/// Maximizer of `⟨π, q⟩ + τ·S̃(π)` at dual index q*.
///
/// At q* = 1 this is [`softmax_policy`]; at q* = 2 it is
/// `sparsemax_policy(q, 2τ)`. Other indices solve the normalization
/// `Σ q_exp((q/τ − ψ)/q*) = 1` by bisection. In every branch `psi` is the ψ
/// of `π = q_exp((q/τ − ψ)/q*)`.
pub fn q_star_greedy(q: &[f64], tau: f64, idx: EntropicIndex) -> GreedyResult {
    check_row(q, tau);
    if idx.is_shannon() {
        return softmax_policy(q, tau);
    }
    let q_star = idx.q_star();
    if q_star == 2.0 {
        let mut out = sparsemax_policy(q, 2.0 * tau);
        // q_exp((z − ψ)/2) = [z/2 − (ψ/2 − 1)]_+ at q* = 2
        out.psi = 2.0 * (out.psi + 1.0);
        return out;
    }

    let n = q.len();
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        let policy = vec![1.0 / n as f64; n];
        let log_u = q_log_unchecked(1.0 / n as f64, idx);
        return GreedyResult {
            support: (0..n).collect(),
            log_policy: vec![log_u; n],
            policy: ProbVector::from_normalized(policy),
            value: max - tau * log_u,
            psi: max / tau - q_star * log_u,
        };
    }

    // Work with q − max so ψ stays O(1) regardless of τ.
    let z: Vec<f64> = q.iter().map(|&v| (v - max) / tau).collect();
    let mass = |psi: f64| -> f64 { z.iter().map(|&zi| q_exp((zi - psi) / q_star, idx)).sum() };
    // At ψ = 0 the top action alone has mass 1; at ψ = −q*·q_log(1/n) every
    // action has mass at most 1/n.
    let mut lo = 0.0;
    let mut hi = -q_star * q_log_unchecked(1.0 / n as f64, idx);
    assert!(mass(lo) >= 1.0 && mass(hi) <= 1.0, "normalization not bracketed");
    let mut psi = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_STEPS {
        psi = 0.5 * (lo + hi);
        let residual = mass(psi) - 1.0;
        if residual.abs() <= NORMALIZATION_TOLERANCE || psi == lo || psi == hi {
            break;
        }
        if residual > 0.0 {
            lo = psi;
        } else {
            hi = psi;
        }
    }
    let mut policy: Vec<f64> = z.iter().map(|&zi| q_exp((zi - psi) / q_star, idx)).collect();
    renormalize(&mut policy);
    let log_policy: Vec<f64> = policy.iter().map(|&p| q_log_unchecked(p, idx)).collect();
    let value = inner(&policy, q) + tau * tsallis_entropy(&policy, idx);
    GreedyResult {
        support: support_of(&policy),
        policy: ProbVector::from_normalized(policy),
        log_policy,
        value,
        psi: psi + max / tau,
    }
}

/// Samples from the ε-mixture of `p` and the uniform distribution.
pub fn select_action<R: Rng + ?Sized>(p: &[f64], epsilon: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..p.len());
    }
    sample_index(p, rng)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (a, &pa) in p.iter().enumerate() {
        if pa > 0.0 {
            last_positive = a;
            cumulative += pa;
            if u < cumulative {
                return a;
            }
        }
    }
    last_positive
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

fn renormalize(policy: &mut [f64]) {
    let total: f64 = policy.iter().sum();
    for p in policy.iter_mut() {
        *p /= total;
    }
}

fn support_of(policy: &[f64]) -> Vec<usize> {
    policy.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(a, _)| a).collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_row(q: &[f64], tau: f64) {
    assert!(!q.is_empty(), "action-value row is empty");
    assert!(tau > 0.0, "temperature must be positive, got {tau}");
    debug_assert!(q.iter().all(|v| v.is_finite()), "non-finite action value");
}
