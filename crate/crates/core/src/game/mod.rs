//! Extensive-form mechanisms with imperfect information, truthful strategy
//! profiles, reach sets and the operator a (game, strategy) pair induces.

mod definitional;
mod reach;
mod tree;

use thiserror::Error;

use crate::notions::NotionError;

pub use definitional::{check_definitional, Counterexample, DefinitionalLimits, DefinitionalVerdict};
pub use reach::{check_gspc, has_perfect_recall, reach_map, reach_table, GspcReport, InducedOperator, ReachMap};
pub use tree::{
    check_implements, play, terminal_of, ActionRecord, Behavior, GameFile, TreeShape, GameTree, InfoSet, LeafRecord,
    Node, NodeId, NodeRecord, StrategyProfile, StrategyRecord,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("malformed game: {0}")]
    Malformed(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("action {action:?} is not available at {label:?}")]
    ActionUnavailable { label: String, action: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{what} exceed the limit of {limit}")]
    BudgetExceeded { what: &'static str, limit: usize },
    #[error(transparent)]
    Notion(#[from] NotionError),
}
