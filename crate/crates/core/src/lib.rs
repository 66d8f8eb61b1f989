//! Tsallis-entropy Munchausen value iteration and tabular learners.
//!
//! Modules, leaves first:
//! - [`qmath`]: q-logarithm, q-exponential, Tsallis entropy and divergences.
//! - [`simplex`]: regularized greedy operators on the probability simplex.
//! - [`mdp`]: finite MDPs, environment generators and exact dynamic programming.
//! - [`munchausen`]: augmented and implicit recursions, baselines and audits.
//! - [`agent`]: replay-based sampled learner.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod error;
pub mod mdp;
pub mod munchausen;
pub mod qmath;
pub mod simplex;

pub use agent::{
    evaluate_agent, td_target, train_agent, AgentConfig, CurvePoint, EpsilonSchedule, Learner, LearningCurve,
    LogCounters, ReplayBuffer, TrainingRun, Transition,
};
pub use error::{Error, Result};
pub use mdp::{make_env, EnvKind, EnvSpec, Mdp, Policy, QTable};
pub use munchausen::{Augmentation, AveragingVariant, EntropicConfig, IterationTrace, TraceRecord};
pub use qmath::{EntropicIndex, ProbVector};
pub use simplex::GreedyResult;
