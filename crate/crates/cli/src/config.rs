//! Flat `section.key = value` experiment files.
//!
//! ```text
//! # comment
//! experiment.mode = sampled
//! experiment.variants = temdqn, log_sparsemax_mdqn, tsallisdqn
//! experiment.seeds = 0..20
//! experiment.output = results
//! env.kind = empty_grid
//! env.width = 8
//! entropic.tau = 0.0025
//! agent.update_period = 2048
//! temdqn.alpha = 0.9
//! ```
//!
//! Sections: `experiment`, `env`, `entropic`, `agent`, `exact`, `sweep`, and
//! one per variant name for overrides of `entropic`/`agent`/`exact` keys.
//! Later lines win. Values are bare; lists are comma separated; seed lists
//! also accept half-open ranges `a..b`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use temrl_core::{AgentConfig, Augmentation, EntropicConfig, EntropicIndex, EnvKind, EnvSpec, EpsilonSchedule};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ExactDp,
    Sampled,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact-dp" | "exact_dp" => Ok(Mode::ExactDp),
            "sampled" => Ok(Mode::Sampled),
            _ => Err(format!("expected exact-dp or sampled, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Temdqn,
    Mdqn,
    LogSparsemaxMdqn,
    Tsallisdqn,
    Sql,
    Movi,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Temdqn, Variant::Mdqn, Variant::LogSparsemaxMdqn, Variant::Tsallisdqn, Variant::Sql, Variant::Movi];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Temdqn => "temdqn",
            Variant::Mdqn => "mdqn",
            Variant::LogSparsemaxMdqn => "log_sparsemax_mdqn",
            Variant::Tsallisdqn => "tsallisdqn",
            Variant::Sql => "sql",
            Variant::Movi => "movi",
        }
    }

    /// SQL and MoVI exist only as exact recursions.
    pub fn is_averaging(self) -> bool {
        matches!(self, Variant::Sql | Variant::Movi)
    }

    /// Regularization used by this variant under the given knobs.
    pub fn entropic(self, k: &Knobs) -> Result<EntropicConfig> {
        let idx = |q: f64| EntropicIndex::new(q).map_err(|e| HarnessError::config("entropic.q_star", e.to_string()));
        let cfg = match self {
            Variant::Temdqn => EntropicConfig::new(idx(k.q_star)?, k.tau, k.alpha, Augmentation::QLog),
            Variant::Mdqn => EntropicConfig::new(EntropicIndex::SHANNON, k.tau, k.alpha, Augmentation::StandardLog),
            Variant::LogSparsemaxMdqn => {
                EntropicConfig::new(EntropicIndex::SPARSE, k.tau, k.alpha, Augmentation::StandardLog)
            }
            Variant::Tsallisdqn => EntropicConfig::new(idx(k.q_star)?, k.tau, 0.0, Augmentation::None),
            Variant::Sql => EntropicConfig::new(EntropicIndex::SHANNON, k.tau, 0.0, Augmentation::None),
            Variant::Movi => EntropicConfig::new(EntropicIndex::SHANNON, k.tau, 0.0, Augmentation::None),
        }
        .with_delta(k.delta);
        cfg.validate().map_err(|e| HarnessError::config(format!("{}.tau/alpha/delta", self.name()), e.to_string()))?;
        Ok(cfg)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            format!("unknown variant '{s}' (expected one of temdqn, mdqn, log_sparsemax_mdqn, tsallisdqn, sql, movi)")
        })
    }
}

/// Environment family; selects τ, α, ε and sync defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Chain and random MDPs.
    Classic,
    /// Empty and obstacle grids.
    Grid,
}

impl Family {
    pub fn of(kind: &EnvKind) -> Family {
        match kind {
            EnvKind::Chain { .. } | EnvKind::Random { .. } => Family::Classic,
            EnvKind::EmptyGrid { .. } | EnvKind::ObstacleGrid { .. } => Family::Grid,
        }
    }
}

/// Every tunable number of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knobs {
    pub q_star: f64,
    pub tau: f64,
    pub alpha: f64,
    pub delta: f64,
    pub total_steps: usize,
    pub interaction_period: usize,
    pub update_period: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub epsilon_decay: f64,
    pub eval_interval: usize,
    pub max_episode_steps: usize,
    /// Sweeps of the exact recursions.
    pub iters: usize,
}

impl Knobs {
    pub fn defaults(family: Family) -> Knobs {
        match family {
            Family::Classic => Knobs {
                q_star: 2.0,
                tau: 10.0,
                alpha: 0.0025,
                delta: 1e-8,
                total_steps: 200_000,
                interaction_period: 4,
                update_period: 2500,
                batch_size: 128,
                buffer_capacity: 50_000,
                learning_rate: 0.1,
                epsilon_initial: 0.01,
                epsilon_final: 0.01,
                epsilon_decay: 1.0,
                eval_interval: 500,
                max_episode_steps: 256,
                iters: 300,
            },
            Family::Grid => Knobs {
                q_star: 2.0,
                tau: GRID_TAU,
                alpha: GRID_ALPHA,
                delta: 1e-8,
                total_steps: 200_000,
                interaction_period: 4,
                update_period: GRID_UPDATE_PERIOD,
                batch_size: 128,
                buffer_capacity: 50_000,
                learning_rate: 0.1,
                epsilon_initial: 1.0,
                epsilon_final: 0.01,
                epsilon_decay: GRID_EPSILON_DECAY,
                eval_interval: 500,
                max_episode_steps: 256,
                iters: 300,
            },
        }
    }

    pub const KEYS: [&'static str; 16] = [
        "q_star",
        "tau",
        "alpha",
        "delta",
        "total_steps",
        "interaction_period",
        "update_period",
        "batch_size",
        "buffer_capacity",
        "learning_rate",
        "epsilon_initial",
        "epsilon_final",
        "epsilon_decay",
        "eval_interval",
        "max_episode_steps",
        "iters",
    ];

    /// Sets `key`; `field` is the full dotted name used in errors.
    pub fn set(&mut self, key: &str, value: &str, field: &str) -> Result<()> {
        match key {
            "q_star" => self.q_star = parse(field, value)?,
            "tau" => self.tau = parse(field, value)?,
            "alpha" => self.alpha = parse(field, value)?,
            "delta" => self.delta = parse(field, value)?,
            "total_steps" => self.total_steps = parse(field, value)?,
            "interaction_period" => self.interaction_period = parse(field, value)?,
            "update_period" => self.update_period = parse(field, value)?,
            "batch_size" => self.batch_size = parse(field, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(field, value)?,
            "learning_rate" => self.learning_rate = parse(field, value)?,
            "epsilon_initial" => self.epsilon_initial = parse(field, value)?,
            "epsilon_final" => self.epsilon_final = parse(field, value)?,
            "epsilon_decay" => self.epsilon_decay = parse(field, value)?,
            "eval_interval" => self.eval_interval = parse(field, value)?,
            "max_episode_steps" => self.max_episode_steps = parse(field, value)?,
            "iters" => self.iters = parse(field, value)?,
            _ => return Err(HarnessError::config(field, "unknown key")),
        }
        Ok(())
    }

    pub fn agent(&self, entropic: EntropicConfig, seed: u64) -> AgentConfig {
        AgentConfig {
            entropic,
            total_steps: self.total_steps,
            interaction_period: self.interaction_period,
            update_period: self.update_period,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            learning_rate: self.learning_rate,
            epsilon: EpsilonSchedule::linear(self.epsilon_initial, self.epsilon_final, self.epsilon_decay),
            eval_interval: self.eval_interval,
            max_episode_steps: self.max_episode_steps,
            seed,
        }
    }
}

/// Grid-family temperature.
pub const GRID_TAU: f64 = 0.0025;
/// Grid-family Munchausen coefficient.
pub const GRID_ALPHA: f64 = 0.9;
/// Grid-family target sync period.
pub const GRID_UPDATE_PERIOD: usize = 2048;
/// Grid-family ε decay fraction.
pub const GRID_EPSILON_DECAY: f64 = 0.1;

/// τ grid for the classic family.
pub const CLASSIC_TAU_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
/// α grid for the classic family.
pub const CLASSIC_ALPHA_GRID: [f64; 6] = [1e-4, 1e-3, 0.01, 0.1, 0.5, 0.9];
/// τ grid for the grid family.
pub const GRID_TAU_GRID: [f64; 5] = [2.5e-4, 2.5e-3, 0.025, 0.25, 2.5];
/// α grid for the grid family.
pub const GRID_ALPHA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub mode: Mode,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Fully resolved knobs per variant, in `variants` order.
    pub knobs: Vec<Knobs>,
    pub sweep_tau: Vec<f64>,
    pub sweep_alpha: Vec<f64>,
}

impl ExperimentConfig {
    /// Default experiment: 8×8 empty grid, sampled, the three sparsemax
    /// variants, 20 seeds.
    pub fn default_sampled() -> ExperimentConfig {
        ExperimentConfig::from_str("").expect("defaults are valid")
    }

    /// Parses `text`, with `mode` (when given) replacing `experiment.mode`
    /// before defaults are resolved and the result is validated.
    pub fn parse_with_mode(text: &str, mode: Option<Mode>) -> Result<Self> {
        let entries = parse_lines(text)?;
        let get = |field: &str| entries.get(field).map(String::as_str);

        let env = parse_env(&entries)?;
        let family = Family::of(&env.kind);
        let file_mode = get("experiment.mode")
            .map(|v| v.parse::<Mode>().map_err(|e| HarnessError::config("experiment.mode", e)))
            .transpose()?;
        let mode = mode.or(file_mode).unwrap_or(Mode::Sampled);
        let variants: Vec<Variant> = match get("experiment.variants") {
            Some(v) => split_list(v)
                .map(|s| s.parse().map_err(|e| HarnessError::config("experiment.variants", e)))
                .collect::<Result<_>>()?,
            None => default_variants(mode),
        };
        let seeds = match get("experiment.seeds") {
            Some(v) => parse_seeds(v)?,
            None => (0..20).collect(),
        };
        let output = PathBuf::from(get("experiment.output").unwrap_or("results"));

        let mut base = Knobs::defaults(family);
        for (field, value) in &entries {
            let (section, key) = field.split_once('.').expect("checked by parse_lines");
            if matches!(section, "entropic" | "agent" | "exact") {
                base.set(key, value, field)?;
            }
        }
        let mut knobs = vec![base; variants.len()];
        for (field, value) in &entries {
            let (section, key) = field.split_once('.').expect("checked by parse_lines");
            if let Ok(variant) = section.parse::<Variant>() {
                if let Some(i) = variants.iter().position(|v| *v == variant) {
                    knobs[i].set(key, value, field)?;
                } else {
                    Knobs::defaults(family).set(key, value, field)?;
                }
            }
        }

        let (tau_grid, alpha_grid): (&[f64], &[f64]) = match family {
            Family::Classic => (&CLASSIC_TAU_GRID, &CLASSIC_ALPHA_GRID),
            Family::Grid => (&GRID_TAU_GRID, &GRID_ALPHA_GRID),
        };
        let sweep_tau = match get("sweep.tau") {
            Some(v) => parse_list("sweep.tau", v)?,
            None => tau_grid.to_vec(),
        };
        let sweep_alpha = match get("sweep.alpha") {
            Some(v) => parse_list("sweep.alpha", v)?,
            None => alpha_grid.to_vec(),
        };

        let cfg = ExperimentConfig { env, mode, variants, seeds, output, knobs, sweep_tau, sweep_alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn knobs_for(&self, variant: Variant) -> Option<&Knobs> {
        self.variants.iter().position(|v| *v == variant).map(|i| &self.knobs[i])
    }

    pub fn family(&self) -> Family {
        Family::of(&self.env.kind)
    }

    /// Forces the mode and re-checks the variant set.
    pub fn with_mode(mut self, mode: Mode) -> Result<Self> {
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self> {
        self.seeds = seeds;
        self.validate()?;
        Ok(self)
    }

    pub fn with_output(mut self, output: PathBuf) -> Self {
        self.output = output;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(HarnessError::config("experiment.variants", "must list at least one variant"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("experiment.seeds", "must list at least one seed"));
        }
        if self.output.as_os_str().is_empty() {
            return Err(HarnessError::config("experiment.output", "must name a directory"));
        }
        for (v, k) in self.variants.iter().zip(&self.knobs) {
            if self.mode == Mode::Sampled && v.is_averaging() {
                return Err(HarnessError::config(
                    "experiment.variants",
                    format!("{v} has no sampled learner; use experiment.mode = exact-dp"),
                ));
            }
            let e = v.entropic(k)?;
            if self.mode == Mode::Sampled {
                k.agent(e, 0).validate().map_err(|err| HarnessError::config(format!("{v}.agent"), err.to_string()))?;
            } else if k.iters == 0 {
                return Err(HarnessError::config(format!("{v}.iters"), "must be at least 1"));
            }
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = HarnessError;

    fn from_str(text: &str) -> Result<Self> {
        ExperimentConfig::parse_with_mode(text, None)
    }
}

fn default_variants(mode: Mode) -> Vec<Variant> {
    match mode {
        Mode::Sampled => vec![Variant::Temdqn, Variant::LogSparsemaxMdqn, Variant::Tsallisdqn],
        Mode::ExactDp => vec![Variant::Temdqn, Variant::Sql, Variant::Mdqn, Variant::Movi],
    }
}

const SECTIONS: [&str; 6] = ["experiment", "env", "entropic", "agent", "exact", "sweep"];
const EXPERIMENT_KEYS: [&str; 4] = ["mode", "variants", "seeds", "output"];
const ENV_KEYS: [&str; 11] =
    ["kind", "width", "height", "length", "n_states", "n_actions", "obstacles", "p_obstacle", "gamma", "slip", "seed"];
const SWEEP_KEYS: [&str; 2] = ["tau", "alpha"];

/// Splits lines into `section.key → value`, rejecting unknown fields.
fn parse_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((field, value)) = line.split_once('=') else {
            return Err(HarnessError::config(
                format!("line {}", lineno + 1),
                format!("expected 'section.key = value', got '{line}'"),
            ));
        };
        let (field, value) = (field.trim(), value.trim());
        let Some((section, key)) = field.split_once('.') else {
            return Err(HarnessError::config(field, "expected 'section.key'"));
        };
        let known = match section {
            "experiment" => EXPERIMENT_KEYS.contains(&key),
            "env" => ENV_KEYS.contains(&key),
            "entropic" | "agent" | "exact" => Knobs::KEYS.contains(&key),
            "sweep" => SWEEP_KEYS.contains(&key),
            s if s.parse::<Variant>().is_ok() => Knobs::KEYS.contains(&key),
            _ => {
                return Err(HarnessError::config(
                    field,
                    format!("unknown section '{section}' (expected one of {} or a variant name)", SECTIONS.join(", ")),
                ))
            }
        };
        if !known {
            return Err(HarnessError::config(field, "unknown key"));
        }
        entries.insert(field.to_string(), value.to_string());
    }
    Ok(entries)
}

fn parse_env(entries: &BTreeMap<String, String>) -> Result<EnvSpec> {
    let get = |key: &str| entries.get(&format!("env.{key}")).map(|v| (format!("env.{key}"), v.as_str()));
    let num = |key: &str, default: usize| -> Result<usize> {
        match get(key) {
            Some((field, v)) => parse(&field, v),
            None => Ok(default),
        }
    };
    let real = |key: &str, default: f64| -> Result<f64> {
        match get(key) {
            Some((field, v)) => parse(&field, v),
            None => Ok(default),
        }
    };
    let kind = match get("kind").map(|(_, v)| v).unwrap_or("empty_grid") {
        "chain" => EnvKind::Chain { length: num("length", 10)? },
        "empty_grid" => EnvKind::EmptyGrid { width: num("width", 8)?, height: num("height", 8)? },
        "obstacle_grid" => EnvKind::ObstacleGrid {
            width: num("width", 8)?,
            height: num("height", 8)?,
            obstacles: num("obstacles", 6)?,
            p_obstacle: real("p_obstacle", 1.0)?,
        },
        "random" => EnvKind::Random { n_states: num("n_states", 10)?, n_actions: num("n_actions", 4)? },
        other => {
            return Err(HarnessError::config(
                "env.kind",
                format!("unknown kind '{other}' (expected chain, empty_grid, obstacle_grid or random)"),
            ))
        }
    };
    let spec = EnvSpec::new(kind, real("gamma", 0.99)?).with_slip(real("slip", 0.0)?).with_seed(num("seed", 0)? as u64);
    temrl_core::make_env(&spec).map_err(|e| HarnessError::config("env", e.to_string()))?;
    Ok(spec)
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::config(field, format!("cannot parse '{value}' as {}", std::any::type_name::<T>())))
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list(field: &str, value: &str) -> Result<Vec<f64>> {
    let list: Vec<f64> = split_list(value).map(|s| parse(field, s)).collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(HarnessError::config(field, "must not be empty"));
    }
    Ok(list)
}

/// `0..20`, `3`, or `1, 4, 9`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let field = "experiment.seeds";
    let mut seeds = Vec::new();
    for item in split_list(value) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (u64, u64) = (parse(field, a.trim())?, parse(field, b.trim())?);
            seeds.extend(a..b);
        } else {
            seeds.push(parse(field, item)?);
        }
    }
    Ok(seeds)
}
