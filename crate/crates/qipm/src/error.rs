//! Error types shared across the solver library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum QipmError {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("infeasible problem shape: m = {m} rows exceed n = {n} columns")]
    InfeasibleShape { m: usize, n: usize },

    #[error("encoding length requires integer data: entry {context}[{index}] = {value}")]
    NonIntegerData {
        context: &'static str,
        index: usize,
        value: f64,
    },

    #[error("matrix is rank deficient: rank {rank} < {expected} rows")]
    RankDeficient { rank: usize, expected: usize },

    #[error("singular system: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("system kind {got} not accepted here (expected {expected})")]
    WrongSystemKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("matrix not symmetric: |M - M^T| = {deviation:.3e} at ({row},{col})")]
    NotSymmetric {
        deviation: f64,
        row: usize,
        col: usize,
    },

    #[error(
        "iterative solver did not converge in {iterations} iterations (residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found before giving up.
        best: Vec<f64>,
    },

    #[error(
        "diverging linear solver after {iterations} iterations: kappa * eps = {kappa_eps:.3e} \
         (residual not contracting)"
    )]
    DivergingSolver { kappa_eps: f64, iterations: usize },

    #[error("iterate left the interior: s[{index}] = {value:.3e} <= 0")]
    InteriorViolation { index: usize, value: f64 },

    #[error("centrality lost at iteration {iteration}: delta = {delta:.4} >= 1/2")]
    CentralityLoss {
        delta: f64,
        iteration: usize,
        trace: Box<crate::ipm::IpmTrace>,
    },

    #[error("newton solve failed at iteration {iteration} (mu = {mu:.3e}): {source}")]
    NewtonFailure {
        iteration: usize,
        mu: f64,
        #[source]
        source: Box<QipmError>,
    },

    #[error("cannot build refining problem: slack[{index}] = {value:.3e} <= 0")]
    CannotRefine { index: usize, value: f64 },

    #[error("centering failed after {steps} damped steps (delta history {history:?})")]
    CenteringFailure { steps: usize, history: Vec<f64> },

    #[error("refinement stage {stage} failed: {source}")]
    StageFailure {
        stage: usize,
        #[source]
        source: Box<QipmError>,
    },

    #[error("partition has {count} undecided indices: {indices:?}")]
    UndecidedPartition { count: usize, indices: Vec<usize> },

    #[error("crossover KKT check failed ({detail}); partition is likely wrong")]
    WrongPartition { detail: String },

    #[error("noise parameter {name} = {value} outside [0, 0.5)")]
    InvalidNoise { name: &'static str, value: f64 },

    #[error("malformed instance file: {0}")]
    MalformedInstance(String),

    #[error("instance file has no start iterate; generate one with this tool")]
    MissingStart,

    #[error("unknown column '{0}' in study report")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QipmError>;
