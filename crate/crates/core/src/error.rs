use thiserror::Error;

/// Structural problems with an instance, detected at construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("epoch grid must start at 0 and have at least one epoch")]
    EmptyGrid,
    #[error("epoch boundaries must be finite and strictly increasing (violated at t_{0})")]
    NonIncreasingBoundary(usize),
    #[error("arrival {index}: {reason}")]
    BadArrival { index: usize, reason: String },
    #[error("deadline {index}: {reason}")]
    BadDeadline { index: usize, reason: String },
    #[error("channel: {0}")]
    BadChannel(String),
    #[error("schedule has {got} epochs, grid has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Violated feasibility conditions. Deadline indices are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error("deadline {deadline} demands {demand} units by t_{epoch} but only {available} arrive strictly before it")]
    InfeasibleDemand {
        deadline: usize,
        epoch: usize,
        demand: f64,
        available: f64,
    },
    #[error("arrivals total {arrivals} but deadlines total {deadlines}")]
    TotalsMismatch { arrivals: f64, deadlines: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("off power beta = {beta} exceeds on power rho = {rho}")]
    NegativeEffectiveRho { rho: f64, beta: f64 },
    #[error("invalid circuit parameters: {0}")]
    InvalidCircuit(String),
    #[error("water level must be positive, got {0}")]
    NonPositiveWater(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Infeasible(#[from] FeasibilityError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("this solver needs a time-invariant channel")]
    NotStatic,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OnlineError {
    #[error("batch {index} at t={time}: {reason}")]
    InfeasibleUpdate {
        index: usize,
        time: f64,
        reason: String,
    },
    #[error("batch {index}: planner failed: {source}")]
    Planner { index: usize, source: SolveError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("oracle supports at most {max} epochs, instance has {got}")]
    TooLarge { max: usize, got: usize },
    #[error("oracle needs at least {min} grid points, got {got}")]
    TooCoarse { min: usize, got: usize },
    #[error(transparent)]
    Infeasible(#[from] FeasibilityError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("plan structure: {0}")]
    StructureMismatch(String),
    #[error("KKT condition failed: {0}")]
    Condition(String),
    #[error("certificate needs a time-invariant channel")]
    NotStatic,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("no feasible instance after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("invalid trial config: {0}")]
    InvalidConfig(String),
    #[error("trial {trial} (seed {seed}): {message}")]
    Trial { trial: usize, seed: u64, message: String },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("malformed input: {0}")]
    Format(String),
}
