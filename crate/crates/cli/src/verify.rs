//! Built-in identity checks with a machine-readable report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use temrl_core::munchausen::{
    compare_divergence_forms, pseudo_average_audit, random_distribution, verify_equivalence, DivergenceReport,
};
use temrl_core::qmath::{q_exp, q_log, tsallis_entropy, tsallis_kl_furuichi};
use temrl_core::simplex::{q_star_greedy, sparsemax_policy};
use temrl_core::{make_env, Augmentation, EntropicConfig, EntropicIndex, EnvKind, EnvSpec};

use crate::error::Result;

pub const VERIFY_SEED: u64 = 20_240_601;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;
pub const EQUIVALENCE_ITERS: usize = 200;
pub const EQUIVALENCE_MDPS: u64 = 10;
pub const Q_STARS: [f64; 3] = [1.0, 1.5, 2.0];
pub const ALPHAS: [f64; 3] = [0.1, 0.5, 0.9];
pub const TAUS: [f64; 3] = [0.03, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub group: String,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Reported only; never fails the suite.
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub entries: Vec<CheckEntry>,
    pub divergence_table: DivergenceReport,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.informational && !e.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

fn check(group: &str, name: String, value: f64, tolerance: f64) -> CheckEntry {
    CheckEntry { group: group.into(), name, value, tolerance, passed: value <= tolerance, informational: false }
}

fn info(group: &str, name: String, value: f64) -> CheckEntry {
    CheckEntry { group: group.into(), name, value, tolerance: f64::INFINITY, passed: true, informational: true }
}

/// Random 10-state, 4-action MDP number `i` of the equivalence grid.
pub fn equivalence_mdp(i: u64) -> Result<temrl_core::Mdp> {
    Ok(make_env(&EnvSpec::new(EnvKind::Random { n_states: 10, n_actions: 4 }, 0.9).with_seed(VERIFY_SEED + i))?)
}

/// `(q*, α, τ, mdp, deviation)`.
pub type EquivalenceCell = (f64, f64, f64, u64, f64);

/// `(q*, α, τ, mdp)` cells with their deviation, in grid order.
pub fn equivalence_grid() -> Result<Vec<EquivalenceCell>> {
    let mdps: Vec<_> = (0..EQUIVALENCE_MDPS).map(equivalence_mdp).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for q in Q_STARS {
        for alpha in ALPHAS {
            for tau in TAUS {
                for i in 0..EQUIVALENCE_MDPS {
                    cells.push((q, alpha, tau, i));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(q, alpha, tau, i)| {
            let cfg = EntropicConfig::new(EntropicIndex::new(q)?, tau, alpha, Augmentation::QLog);
            let dev = verify_equivalence(&mdps[i as usize], &cfg, EQUIVALENCE_ITERS)?;
            Ok((q, alpha, tau, i, dev))
        })
        .collect()
}

/// Euclidean simplex projection by iterated thresholding, independent of sorting.
pub fn michelot_projection(z: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..z.len()).collect();
    loop {
        let theta = (active.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let kept: Vec<usize> = active.iter().copied().filter(|&i| z[i] > theta).collect();
        if kept.len() == active.len() {
            return z.iter().map(|&v| (v - theta).max(0.0)).collect();
        }
        active = kept;
    }
}

fn qmath_checks(rng: &mut ChaCha8Rng, out: &mut Vec<CheckEntry>) -> Result<()> {
    for q in [1.0, 1.5, 2.0, 3.0] {
        let idx = EntropicIndex::new(q)?;
        let (mut roundtrip, mut additivity) = (0.0f64, 0.0f64);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(1e-3..10.0);
            let y: f64 = rng.gen_range(1e-3..10.0);
            roundtrip = roundtrip.max((q_exp(q_log(x, idx)?, idx) - x).abs() / x.max(1.0));
            let (lx, ly) = (q_log(x, idx)?, q_log(y, idx)?);
            let expected = lx + ly + (q - 1.0) * lx * ly;
            additivity = additivity.max((q_log(x * y, idx)? - expected).abs() / expected.abs().max(1.0));
        }
        out.push(check("qmath", format!("q_exp(q_log(x)) = x, q*={q}"), roundtrip, 1e-12));
        out.push(check("qmath", format!("pseudo-additivity, q*={q}"), additivity, 1e-12));

        let (mut below, mut above, mut furuichi_min) = (0.0f64, 0.0f64, 0.0f64);
        for n in 2..=6 {
            let cap = idx.max_entropy(n);
            for _ in 0..200 {
                let p = random_distribution(n, rng);
                let m = random_distribution(n, rng);
                let s = tsallis_entropy(&p, idx);
                below = below.max(-s);
                above = above.max(s - cap);
                furuichi_min = furuichi_min.min(tsallis_kl_furuichi(&p, &m, q)?);
            }
            let uniform = vec![1.0 / n as f64; n];
            above = above.max((tsallis_entropy(&uniform, idx) - cap).abs());
            let mut vertex = vec![0.0; n];
            vertex[0] = 1.0;
            below = below.max(tsallis_entropy(&vertex, idx).abs());
        }
        out.push(check("qmath", format!("entropy lower bound and vertex equality, q*={q}"), below, 1e-12));
        out.push(check("qmath", format!("entropy upper bound and uniform equality, q*={q}"), above, 1e-12));
        out.push(check("qmath", format!("Furuichi divergence nonnegative, q*={q}"), -furuichi_min, 1e-12));
    }
    Ok(())
}

fn simplex_checks(rng: &mut ChaCha8Rng, out: &mut Vec<CheckEntry>) -> Result<()> {
    let mut projection = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=6);
        let tau = 10f64.powf(rng.gen_range(-2.0..1.0));
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z: Vec<f64> = q.iter().map(|v| v / tau).collect();
        let oracle = michelot_projection(&z);
        let got = sparsemax_policy(&q, tau);
        for (a, b) in got.policy.iter().zip(&oracle) {
            projection = projection.max((a - b).abs());
        }
    }
    out.push(check("simplex", "sparsemax equals simplex projection".into(), projection, 1e-12));

    for q_star in [1.5, 3.0] {
        let idx = EntropicIndex::new(q_star)?;
        let mut normalization = 0.0f64;
        for _ in 0..1000 {
            let n = rng.gen_range(1..=6);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = q_star_greedy(&q, rng.gen_range(0.05..2.0), idx);
            normalization = normalization.max((g.policy.iter().sum::<f64>() - 1.0).abs());
        }
        out.push(check("simplex", format!("q_star_greedy sums to one, q*={q_star}"), normalization, 1e-12));
    }
    Ok(())
}

fn pseudo_average_checks(rng: &mut ChaCha8Rng, out: &mut Vec<CheckEntry>) -> Result<()> {
    let r = pseudo_average_audit(&[0.1, 0.2], 2.0)?;
    out.push(check("pseudo_average", "q*=2, Q=(0.1,0.2): lhs = 1.3".into(), (r.lhs - 1.3).abs(), 1e-12));
    out.push(check("pseudo_average", "q*=2, Q=(0.1,0.2): product = 1.32".into(), (r.product - 1.32).abs(), 1e-12));
    out.push(check("pseudo_average", "q*=2, Q=(0.1,0.2): residual = 0.02".into(), (r.residual - 0.02).abs(), 1e-12));
    for q in [1.5, 2.0, 3.0] {
        let (mut minus, mut plus, mut chain) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..100 {
            let values: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..0.5)).collect();
            let r = pseudo_average_audit(&values, q)?;
            minus = minus.max(r.gap_minus.abs() / r.lhs.abs().max(1.0));
            plus = plus.max(r.gap_plus.abs());
            chain = chain.max((r.chained - r.exp_of_sum).abs() / r.exp_of_sum.abs().max(1.0));
        }
        out.push(check("pseudo_average", format!("lhs = product − residual, q*={q}"), minus, 1e-12));
        out.push(info("pseudo_average", format!("|lhs − (product + residual)|, q*={q}"), plus));
        out.push(check("pseudo_average", format!("q-product chaining equals q_exp of sum, q*={q}"), chain, 1e-12));
    }
    Ok(())
}

/// Runs every check; deterministic given [`VERIFY_SEED`].
pub fn verify_suite() -> Result<VerifyReport> {
    let mut entries = Vec::new();
    for (q, alpha, tau, i, dev) in equivalence_grid()? {
        entries.push(check(
            "equivalence",
            format!("q*={q} alpha={alpha} tau={tau} mdp={i}"),
            dev,
            EQUIVALENCE_TOLERANCE,
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    pseudo_average_checks(&mut rng, &mut entries)?;
    qmath_checks(&mut rng, &mut entries)?;
    simplex_checks(&mut rng, &mut entries)?;

    let divergence_table = compare_divergence_forms(1000, &[1.0, 1.5, 2.0, 3.0], 4, VERIFY_SEED)?;
    for row in &divergence_table.rows {
        let name = format!("q-log vs Furuichi divergence, q*={}", row.q_star);
        if row.q_star == 1.0 {
            entries.push(check("divergence_forms", name, row.max_abs_diff(), 1e-12));
        } else {
            entries.push(info("divergence_forms", name, row.max_abs_diff()));
        }
    }

    let passed = entries.iter().all(|e| e.informational || e.passed);
    Ok(VerifyReport { seed: VERIFY_SEED, passed, entries, divergence_table })
}
