//! Runs (variant, seed) cells, aggregates them and writes results.
//!
//! Cells are independent and may run in parallel; every cell owns its RNG and
//! results are collected in (variant, seed) order, so outputs do not depend on
//! scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use temrl_core::munchausen::{
    averaged_baseline_iterate, format_float, log_sparsemax_mdqn_iterate, mdqn_iterate, temdqn_iterate,
};
use temrl_core::{
    make_env, train_agent, Augmentation, AveragingVariant, CurvePoint, EntropicConfig, EnvKind, EnvSpec,
    IterationTrace, Mdp,
};

use crate::config::{ExperimentConfig, Knobs, Mode, Variant};
use crate::error::{HarnessError, Result};

pub const RECORD_HEADER: [&str; 6] = ["run_id", "seed", "variant", "env_step", "exact_return", "episode_return"];
pub const AGGREGATE_HEADER: [&str; 7] =
    ["variant", "env_step", "n", "mean_exact_return", "std_exact_return", "mean_episode_return", "std_episode_return"];
pub const SUMMARY_HEADER: [&str; 4] = ["variant", "n", "final_mean_return", "final_std_return"];

/// One row of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub run_id: String,
    pub seed: u64,
    pub variant: Variant,
    pub env_step: usize,
    pub exact_return: f64,
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub run_id: String,
    pub variant: Variant,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl CellResult {
    pub fn records(&self) -> Vec<Record> {
        self.points
            .iter()
            .map(|p| Record {
                run_id: self.run_id.clone(),
                seed: self.seed,
                variant: self.variant,
                env_step: p.env_step,
                exact_return: p.exact_return,
                episode_return: p.episode_return,
            })
            .collect()
    }

    pub fn final_return(&self) -> Option<f64> {
        self.points.last().map(|p| p.exact_return)
    }
}

/// All cells of one experiment, in (variant, seed) order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub cells: Vec<CellResult>,
}

impl ResultBundle {
    pub fn records(&self) -> Vec<Record> {
        self.cells.iter().flat_map(CellResult::records).collect()
    }

    pub fn cells_of(&self, variant: Variant) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.variant == variant)
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out: Vec<Variant> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.variant) {
                out.push(c.variant);
            }
        }
        out
    }

    /// Seed-mean and sample std of the last exact return per variant.
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.variants()
            .into_iter()
            .map(|v| {
                let mut acc = Welford::default();
                self.cells_of(v).filter_map(CellResult::final_return).for_each(|x| acc.push(x));
                SummaryRow { variant: v, n: acc.n, final_mean_return: acc.mean(), final_std_return: acc.std() }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub n: usize,
    pub final_mean_return: f64,
    pub final_std_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub env_step: usize,
    pub n: usize,
    pub mean_exact_return: f64,
    pub std_exact_return: f64,
    pub mean_episode_return: f64,
    pub std_episode_return: f64,
}

/// One-pass running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation; 0 for a single observation.
    pub fn std(&self) -> f64 {
        match self.n {
            0 => f64::NAN,
            1 => 0.0,
            n => (self.m2 / (n - 1) as f64).sqrt(),
        }
    }
}

/// Per-(variant, env_step) statistics across seeds.
pub fn aggregate(bundle: &ResultBundle) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for v in bundle.variants() {
        let cells: Vec<&CellResult> = bundle.cells_of(v).collect();
        let mut steps: Vec<usize> = cells.iter().flat_map(|c| c.points.iter().map(|p| p.env_step)).collect();
        steps.sort_unstable();
        steps.dedup();
        for step in steps {
            let (mut exact, mut episode) = (Welford::default(), Welford::default());
            for c in &cells {
                if let Some(p) = c.points.iter().find(|p| p.env_step == step) {
                    exact.push(p.exact_return);
                    episode.push(p.episode_return);
                }
            }
            rows.push(AggregateRow {
                variant: v,
                env_step: step,
                n: exact.count(),
                mean_exact_return: exact.mean(),
                std_exact_return: exact.std(),
                mean_episode_return: episode.mean(),
                std_episode_return: episode.std(),
            });
        }
    }
    rows
}

pub fn run_id(variant: Variant, seed: u64) -> String {
    format!("{variant}-s{seed}")
}

/// The environment a cell runs on. Exact-dp seeds offset the generator seed
/// of random MDPs; sampled seeds drive the learner only.
pub fn cell_env(cfg: &ExperimentConfig, seed: u64) -> EnvSpec {
    match (cfg.mode, &cfg.env.kind) {
        (Mode::ExactDp, EnvKind::Random { .. }) => cfg.env.clone().with_seed(cfg.env.seed.wrapping_add(seed)),
        _ => cfg.env.clone(),
    }
}

fn trace_points(trace: &IterationTrace) -> Vec<CurvePoint> {
    trace
        .records
        .iter()
        .map(|r| CurvePoint { env_step: r.iter, exact_return: r.policy_return, episode_return: r.policy_return })
        .collect()
}

/// Exact recursion of one variant; the curve is the per-sweep exact return.
pub fn run_exact(m: &Mdp, variant: Variant, knobs: &Knobs) -> Result<Vec<CurvePoint>> {
    let e = variant.entropic(knobs)?;
    let trace = match variant {
        Variant::Temdqn => temdqn_iterate(m, &e, knobs.iters)?.2,
        // α = 0 removes the augmentation term, whatever its form
        Variant::Tsallisdqn => {
            let plain = EntropicConfig::new(e.idx, e.tau, 0.0, Augmentation::QLog).with_delta(e.delta);
            temdqn_iterate(m, &plain, knobs.iters)?.2
        }
        Variant::Mdqn => mdqn_iterate(m, &e, knobs.iters)?.2,
        Variant::LogSparsemaxMdqn => log_sparsemax_mdqn_iterate(m, &e, knobs.iters)?.2,
        Variant::Sql => averaged_baseline_iterate(m, AveragingVariant::Sql, knobs.tau, knobs.iters)?.1,
        Variant::Movi => averaged_baseline_iterate(m, AveragingVariant::Movi, knobs.tau, knobs.iters)?.1,
    };
    Ok(trace_points(&trace))
}

pub fn run_cell(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<CellResult> {
    let knobs = cfg
        .knobs_for(variant)
        .ok_or_else(|| HarnessError::config("experiment.variants", format!("{variant} is not configured")))?;
    let m = make_env(&cell_env(cfg, seed))?;
    let points = match cfg.mode {
        Mode::ExactDp => run_exact(&m, variant, knobs)?,
        Mode::Sampled => train_agent(&m, &knobs.agent(variant.entropic(knobs)?, seed))?.curve.points,
    };
    Ok(CellResult { run_id: run_id(variant, seed), variant, seed, points })
}

/// Runs every cell without touching the filesystem.
pub fn run_bundle(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let cells: Vec<(Variant, u64)> =
        cfg.variants.iter().flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let cells = cells.into_par_iter().map(|(v, s)| run_cell(cfg, v, s)).collect::<Result<Vec<_>>>()?;
    Ok(ResultBundle { cells })
}

pub fn cell_path(dir: &Path, cell: &CellResult) -> PathBuf {
    dir.join(format!("{}.csv", cell.run_id))
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Runs every cell and writes one CSV per cell plus `aggregate.csv`.
pub fn run_config(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    prepare_dir(&cfg.output)?;
    let bundle = run_bundle(cfg)?;
    for cell in &bundle.cells {
        write_file(&cell_path(&cfg.output, cell), &records_csv(&cell.records()))?;
    }
    write_file(&cfg.output.join(AGGREGATE_FILE), &aggregate_csv(&aggregate(&bundle)))?;
    Ok(bundle)
}

pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::config("experiment.output", format!("{}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::config("experiment.output", format!("{}: {e}", path.display())))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn records_csv(records: &[Record]) -> String {
    csv_string(
        &RECORD_HEADER,
        records.iter().map(|r| {
            vec![
                r.run_id.clone(),
                r.seed.to_string(),
                r.variant.to_string(),
                r.env_step.to_string(),
                format_float(r.exact_return),
                format_float(r.episode_return),
            ]
        }),
    )
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    csv_string(
        &AGGREGATE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.variant.to_string(),
                r.env_step.to_string(),
                r.n.to_string(),
                format_float(r.mean_exact_return),
                format_float(r.std_exact_return),
                format_float(r.mean_episode_return),
                format_float(r.std_episode_return),
            ]
        }),
    )
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    csv_string(
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.variant.to_string(),
                r.n.to_string(),
                format_float(r.final_mean_return),
                format_float(r.final_std_return),
            ]
        }),
    )
}

/// Parses a records CSV written by [`records_csv`].
pub fn parse_records_csv(text: &str) -> Result<Vec<Record>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader.deserialize().map(|r| r.map_err(|e| HarnessError::config("records", e.to_string()))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// JSON layout: the CSV records plus the summary block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonResults {
    pub records: Vec<Record>,
    pub summary: Vec<SummaryRow>,
}

impl JsonResults {
    pub fn from_bundle(bundle: &ResultBundle) -> Self {
        JsonResults { records: bundle.records(), summary: bundle.summary() }
    }

    /// Floats are written in shortest round-trip form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::config("results.json", e.to_string()))
    }
}

/// Writes `results.csv` + `summary.csv`, or `results.json`; returns the paths.
pub fn emit_results(bundle: &ResultBundle, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare_dir(dir)?;
    match format {
        Format::Csv => {
            let results = dir.join("results.csv");
            let summary = dir.join("summary.csv");
            write_file(&results, &records_csv(&bundle.records()))?;
            write_file(&summary, &summary_csv(&bundle.summary()))?;
            Ok(vec![results, summary])
        }
        Format::Json => {
            let path = dir.join("results.json");
            write_file(&path, &JsonResults::from_bundle(bundle).to_json())?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(variant: Variant, seed: u64, returns: &[f64]) -> CellResult {
        CellResult {
            run_id: run_id(variant, seed),
            variant,
            seed,
            points: returns
                .iter()
                .enumerate()
                .map(|(i, &r)| CurvePoint { env_step: i * 10, exact_return: r, episode_return: -r })
                .collect(),
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [0.1, 1e8 + 0.3, 1e8 - 0.7, 2.5, -3.25];
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() <= 1e-12 * mean.abs());
        assert!((w.std() - var.sqrt()).abs() <= 1e-12 * var.sqrt());
    }

    #[test]
    fn aggregate_per_step() {
        let bundle =
            ResultBundle { cells: vec![cell(Variant::Temdqn, 0, &[1.0, 2.0]), cell(Variant::Temdqn, 1, &[3.0, 6.0])] };
        let rows = aggregate(&bundle);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[1].env_step, rows[1].n, rows[1].mean_exact_return), (10, 2, 4.0));
        assert!((rows[1].std_exact_return - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].mean_episode_return, -4.0);
        let summary = bundle.summary();
        assert_eq!(summary[0].final_mean_return, 4.0);
    }

    #[test]
    fn empty_bundle_is_header_only() {
        let csv = records_csv(&ResultBundle::default().records());
        assert_eq!(csv, "run_id,seed,variant,env_step,exact_return,episode_return\n");
    }

    #[test]
    fn csv_floats_reparse_exactly() {
        let x = 0.1 + 0.2;
        let bundle = ResultBundle { cells: vec![cell(Variant::Sql, 3, &[x, 1.0 / 3.0, -0.0])] };
        let records = bundle.records();
        assert_eq!(parse_records_csv(&records_csv(&records)).unwrap(), records);
    }
}
