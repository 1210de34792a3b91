//! Network structural causal models: a semi-synthetic generator with
//! interventional ground truth, and small discrete models for exact checks.

mod discrete;
mod generate;
mod mechanism;

pub use discrete::{DiscreteNscm, DiscreteParts, OracleComparison};
pub use generate::{
    generate_semi_synthetic, ground_truth_intervention, replay_with_assignment, BaseTable, GenConfig, SemiSynthetic,
};
pub use mechanism::{DenseLayer, MessagePassingMechanism, NscmSpec};

use thiserror::Error;

use crate::graph::GraphError;
use crate::stats::StatsError;
use crate::table::TableError;

#[derive(Debug, Error)]
pub enum NscmError {
    #[error("invalid generator config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("unknown preset {0:?} (expected d1, d2 or h3)")]
    UnknownPreset(String),
    #[error("base table is empty")]
    EmptyBase,
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("table carries no stored exogenous noise; it was not produced by the generator")]
    MissingExogenous,
    #[error("interventional formula disagrees with enumeration under do(S={s_value}) by {max_abs_diff:e}")]
    OracleMismatch { s_value: u8, max_abs_diff: f64 },
    #[error("discrete model: {0}")]
    Discrete(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Table(#[from] TableError),
}
