use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("replay table is missing cell (context {context}, action {action})")]
    IncompleteTable { context: String, action: String },
    #[error("duplicate cell (context {context}, action {action})")]
    DuplicateCell { context: String, action: String },
    #[error("bad value: {0}")]
    BadValue(String),
    #[error("index out of range: {0}")]
    IndexError(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("correlation undefined (constant input)")]
    UndefinedCorrelation,
    #[error("pilot contains no queried actions")]
    EmptyPilot,
    #[error("budget {budget} exceeds the {n_actions} available actions")]
    BudgetExceedsActions { budget: usize, n_actions: usize },
    #[error("reward {0} outside [0, 1]")]
    BadReward(f64),
    #[error("invalid planner specification: {0}")]
    BadSpec(String),
    #[error("condition has no result for baseline planner {0}")]
    MissingBaseline(String),
    #[error("planner {0} missing from results")]
    MissingPlanner(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("target {target} outside [{low}, {high}]")]
    TargetUnreachable { target: f64, low: f64, high: f64 },
    #[error("unbalanced factorial design: {0}")]
    UnbalancedDesign(String),
    #[error("factorial design has zero total variance")]
    ZeroVariance,
    #[error("threshold formula out of regime: log argument {0} <= 1")]
    OutOfRegime(f64),
    #[error("k = {k} must lie in 1..={n_actions}")]
    BadK { k: usize, n_actions: usize },
    #[error("runs are not aligned across planners: {0}")]
    MisalignedRuns(String),
    #[error("structured prior needs at least one anchor")]
    NoAnchors,
    #[error("feature vector for action {0} has zero norm")]
    DegenerateFeature(usize),
    #[error("kernel matrix rejected: {0}")]
    BadKernel(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
