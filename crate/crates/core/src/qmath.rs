//! Deformed-logarithm calculus.
//!
//! Two logarithm conventions live side by side here:
//!
//! | Function | Convention | Formula (index ≠ 1) |
//! |----------|------------|---------------------|
//! | [`q_log`] | dual index q* | (x^(q*−1) − 1)/(q*−1) |
//! | [`ln_q`] | entropic index q | (x^(1−q) − 1)/(1−q) |
//!
//! The two are related by q* = 2 − q. The recursions in this crate consume
//! [`q_log`]; [`ln_q`] is only used by the Furuichi divergence and the
//! pseudo-additivity identity. At index 1 both are the natural logarithm.
//!
//! Canonical regularizer: `S̃(π) = −⟨π, q_log(π)⟩` ([`tsallis_entropy`]).
//! At q* = 1 this is Shannon entropy, at q* = 2 it is `Σ π(1 − π)`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Distance from 1 below which an index is treated as exactly 1.
pub const SHANNON_TOLERANCE: f64 = 1e-9;

/// Tolerance on `Σ p = 1` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Dual entropic index `q* ≥ 1`. The entropic index is `q = 2 − q*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EntropicIndex(f64);

impl EntropicIndex {
    /// Shannon / softmax branch.
    pub const SHANNON: EntropicIndex = EntropicIndex(1.0);
    /// Sparse Tsallis entropy / sparsemax branch.
    pub const SPARSE: EntropicIndex = EntropicIndex(2.0);

    pub fn new(q_star: f64) -> Result<Self> {
        if !q_star.is_finite() || q_star < 1.0 - SHANNON_TOLERANCE {
            return Err(domain(format!("dual entropic index must be a finite value >= 1, got {q_star}")));
        }
        Ok(EntropicIndex(q_star.max(1.0)))
    }

    pub fn q_star(self) -> f64 {
        self.0
    }

    /// Entropic index in the physics convention, `2 − q*`.
    pub fn q(self) -> f64 {
        2.0 - self.0
    }

    pub fn is_shannon(self) -> bool {
        (self.0 - 1.0).abs() < SHANNON_TOLERANCE
    }

    /// Largest value of [`tsallis_entropy`] over `n` outcomes, `−q_log(1/n)`.
    pub fn max_entropy(self, n: usize) -> f64 {
        -q_log_unchecked(1.0 / n as f64, self)
    }
}

impl TryFrom<f64> for EntropicIndex {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        EntropicIndex::new(value)
    }
}

impl From<EntropicIndex> for f64 {
    fn from(idx: EntropicIndex) -> f64 {
        idx.0
    }
}

/// A validated probability vector. Exact zeros are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(domain("probability vector is empty"));
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(domain(format!("probability entry {bad} outside [0, 1]")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ProbVector(p))
    }

    /// Wraps a vector produced by an operator that already guarantees validity.
    pub(crate) fn from_normalized(p: Vec<f64>) -> Self {
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        ProbVector(p)
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f64; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Dual-convention q-logarithm, `(x^(q*−1) − 1)/(q*−1)`, natural log at q* = 1.
///
/// Finite at zero for q* > 1: `q_log(0) = −1/(q*−1)`.
pub fn q_log(x: f64, idx: EntropicIndex) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(domain(format!("q_log of negative argument {x}")));
    }
    if x == 0.0 && idx.is_shannon() {
        return Err(domain("natural logarithm of zero"));
    }
    Ok(q_log_unchecked(x, idx))
}

#[inline]
pub(crate) fn q_log_unchecked(x: f64, idx: EntropicIndex) -> f64 {
    if idx.is_shannon() {
        x.ln()
    } else {
        let k = idx.q_star() - 1.0;
        // expm1 keeps full precision as q* → 1
        (k * x.ln()).exp_m1() / k
    }
}

/// Dual-convention q-exponential, `[1 + (q*−1)x]_+^(1/(q*−1))`.
pub fn q_exp(x: f64, idx: EntropicIndex) -> f64 {
    if idx.is_shannon() {
        return x.exp();
    }
    let k = idx.q_star() - 1.0;
    if 1.0 + k * x <= 0.0 {
        0.0
    } else {
        ((k * x).ln_1p() / k).exp()
    }
}

/// q*-product: `[x^(q*−1) + y^(q*−1) − 1]_+^(1/(q*−1))`; ordinary product at q* = 1.
///
/// `q_product(q_exp(a), q_exp(b)) = q_exp(a + b)` on the unclipped domain.
pub fn q_product(x: f64, y: f64, idx: EntropicIndex) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0);
    if idx.is_shannon() {
        return x * y;
    }
    let k = idx.q_star() - 1.0;
    let base = x.powf(k) + y.powf(k) - 1.0;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / k)
    }
}

/// Entropic-index (physics) convention q-logarithm, `(x^(1−q) − 1)/(1−q)`.
pub fn ln_q(x: f64, q: f64) -> f64 {
    if (q - 1.0).abs() < SHANNON_TOLERANCE {
        x.ln()
    } else {
        let k = 1.0 - q;
        (k * x.ln()).exp_m1() / k
    }
}

/// Tsallis entropy `−Σ p_a q_log(p_a)`.
///
/// Zero entries contribute nothing (at q* = 1 by the `x ln x → 0` limit).
pub fn tsallis_entropy(p: &[f64], idx: EntropicIndex) -> f64 {
    -p.iter().filter(|&&pa| pa > 0.0).map(|&pa| pa * q_log_unchecked(pa, idx)).sum::<f64>()
}

/// `Σ p_a (q_log(p_a) − q_log(m_a))`: the divergence appearing in the
/// implicit Munchausen recursion. Standard KL at q* = 1.
pub fn tsallis_kl_qlog(p: &[f64], m: &[f64], idx: EntropicIndex) -> Result<f64> {
    check_same_len(p, m)?;
    let mut total = 0.0;
    for (&pa, &ma) in p.iter().zip(m) {
        if pa == 0.0 {
            continue;
        }
        if idx.is_shannon() && ma <= 0.0 {
            return Err(domain("KL divergence with p > 0 where m = 0"));
        }
        total += pa * (q_log_unchecked(pa, idx) - q_log_unchecked(ma, idx));
    }
    Ok(total)
}

/// Furuichi Tsallis relative entropy `−Σ p_a ln_q(m_a / p_a)` in the
/// entropic-index convention. Nonnegative, zero iff `p = m`.
pub fn tsallis_kl_furuichi(p: &[f64], m: &[f64], q: f64) -> Result<f64> {
    check_same_len(p, m)?;
    let mut total = 0.0;
    for (&pa, &ma) in p.iter().zip(m) {
        if pa == 0.0 {
            continue;
        }
        if ma <= 0.0 {
            return Err(domain("Tsallis relative entropy with p > 0 where m = 0"));
        }
        total -= pa * ln_q(ma / pa, q);
    }
    Ok(total)
}

/// `ln(p_a + delta)` per entry. Only the standard-log baselines use this.
pub fn stable_log(p: &[f64], delta: f64) -> Vec<f64> {
    p.iter().map(|&pa| (pa + delta).ln()).collect()
}

fn check_same_len(p: &[f64], m: &[f64]) -> Result<()> {
    if p.len() != m.len() {
        return Err(domain(format!("distributions have different lengths ({} vs {})", p.len(), m.len())));
    }
    Ok(())
}
