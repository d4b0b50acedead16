use thiserror::Error;

use crate::network::NodeId;
use crate::solver::SolverStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a solver failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    Routing,
    Rerouting,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::Baseline => "baseline",
            Phase::Routing => "routing",
            Phase::Rerouting => "re-routing",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("structurally infeasible: {0}")]
    Structural(String),

    #[error("{phase} solve failed with status {status:?}")]
    Solver { phase: Phase, status: SolverStatus },

    #[error("solution quality: {0}")]
    SolutionQuality(String),

    #[error("inconsistent trip graph at node {node}: imbalance {imbalance:e}")]
    Inconsistent { node: NodeId, imbalance: f64 },

    #[error("algorithm failed: {0}")]
    Algorithm(String),

    #[error("trip {trip} cannot be driven even after charging (state of charge {soc:.4} below reserve)")]
    InfeasibleTrip { trip: String, soc: f64 },

    #[error("scenario: {0}")]
    Scenario(String),
}
