use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid instance: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no route from {0} to {1}")]
    NoRoute(String, String),
    #[error("unallocatable task {0}: no device offers its capability")]
    UnallocatableTask(u32),
    #[error("missing replica for primary {0}")]
    MissingReplica(String),
    #[error("malformed LP at line {line}: {msg}")]
    MalformedLp { line: usize, msg: String },
    #[error("solver not found: {0}")]
    SolverNotFound(String),
    #[error("solver crashed: {0}")]
    SolverCrashed(String),
    #[error("malformed solution file: {0}")]
    MalformedSolution(String),
    #[error("inconsistent solution: {0}")]
    InconsistentSolution(String),
    #[error("oracle limits exceeded: {0}")]
    LimitsExceeded(String),
    #[error("unsatisfiable generator spec: {0}")]
    UnsatisfiableSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{} ({})", x.code, x.detail))
        .collect::<Vec<_>>()
        .join("; ")
}
