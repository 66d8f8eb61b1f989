//! Grid search over (τ, α) for every configured variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use temrl_core::munchausen::format_float;

use crate::config::{ExperimentConfig, Variant};
use crate::error::Result;
use crate::runner::{run_cell, Welford};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub tau: f64,
    /// 0 for variants without a Munchausen term.
    pub alpha: f64,
    pub n: usize,
    pub final_mean_return: f64,
    pub final_std_return: f64,
}

pub const SWEEP_HEADER: &str = "variant,tau,alpha,n,final_mean_return,final_std_return";

pub fn uses_alpha(v: Variant) -> bool {
    matches!(v, Variant::Temdqn | Variant::Mdqn | Variant::LogSparsemaxMdqn)
}

/// Seed-averaged final return for each (variant, τ, α) point.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut points = Vec::new();
    for (i, &v) in cfg.variants.iter().enumerate() {
        let alphas: Vec<f64> = if uses_alpha(v) { cfg.sweep_alpha.clone() } else { vec![0.0] };
        for &tau in &cfg.sweep_tau {
            for &alpha in &alphas {
                points.push((i, v, tau, alpha));
            }
        }
    }
    points
        .into_par_iter()
        .map(|(i, v, tau, alpha)| {
            let mut point = cfg.clone();
            point.knobs[i].tau = tau;
            if uses_alpha(v) {
                point.knobs[i].alpha = alpha;
            }
            let mut acc = Welford::default();
            for &seed in &cfg.seeds {
                if let Some(r) = run_cell(&point, v, seed)?.final_return() {
                    acc.push(r);
                }
            }
            Ok(SweepRow {
                variant: v,
                tau,
                alpha,
                n: acc.count(),
                final_mean_return: acc.mean(),
                final_std_return: acc.std(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant,
            format_float(r.tau),
            format_float(r.alpha),
            r.n,
            format_float(r.final_mean_return),
            format_float(r.final_std_return)
        ));
    }
    out
}
