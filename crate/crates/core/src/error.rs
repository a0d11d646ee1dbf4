use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::ExprError;
use crate::model::Violation;
use crate::nash::DeviationTable;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model validation failed with {} violation(s)", .0.len())]
    ValidationFailed(Vec<Violation>),

    #[error("bad geometry: {0}")]
    BadGeometry(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge in {iterations} iterations (bracket [{lo}, {hi}])")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("stencil matrix is reducible: node {node} is disconnected")]
    Reducible { node: usize },

    #[error("vector is not strictly positive at index {index}")]
    NonPositiveVector { index: usize },

    #[error("policy iteration did not converge in {} outer steps", .history.len())]
    PolicyNoConvergence { history: Vec<f64> },

    #[error("Dirichlet eigenvalue decreased from {previous} to {current} at radius {radius}")]
    MonotonicityViolation {
        radius: f64,
        previous: f64,
        current: f64,
    },

    #[error("path {path} produced a non-finite cost integral")]
    NumericalOverflow { path: u64 },

    #[error("{capped} of {paths} paths hit the horizon before the ball")]
    TooManyCapped { capped: usize, paths: usize },

    #[error(
        "Lyapunov inequality fails at {node:?} for actions ({action1}, {action2}): excess {excess}"
    )]
    SpecInfeasible {
        node: Vec<f64>,
        action1: usize,
        action2: usize,
        excess: f64,
    },

    #[error("unilateral deviation lowers a player's cost")]
    NashViolation(Box<DeviationTable>),
}
