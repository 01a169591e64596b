use thiserror::Error;

use crate::model::GraphIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("memory level {level} exceeds max level {max_level}")]
    InvalidLevel { level: u8, max_level: u8 },

    #[error("{total_mb} MB of managed memory is below the 64 MB minimum")]
    InsufficientMemory { total_mb: f64 },

    #[error("stateful operator `{0}` has no memory level")]
    MissingMemoryLevel(String),

    #[error("invalid query graph: {}", format_issues(.0))]
    InvalidGraph(Vec<GraphIssue>),

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown microbenchmark kind `{0}` (expected read, write or update)")]
    UnknownKind(String),

    #[error("unknown policy `{0}` (expected none, ds2 or justin)")]
    UnknownPolicy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric window [{start}, {end}) holds no trace points")]
    EmptyWindow { start: f64, end: f64 },

    #[error("operator `{0}` reports zero busyness with a nonzero offered rate")]
    UndefinedTrueRate(String),

    #[error("decision history does not end with the previous configuration")]
    InconsistentHistory,

    #[error("decision history needs at least two entries for `{0}`")]
    InsufficientHistory(String),

    #[error("task {operator}#{task_index} needs {managed_mb} MB, task manager budget is {budget_mb} MB")]
    UnsatisfiableDemand {
        operator: String,
        task_index: u32,
        managed_mb: f64,
        budget_mb: f64,
    },

    #[error("placement needs more than the {limit} task managers allowed ({unplaced} tasks left unplaced)")]
    CapacityExhausted { limit: usize, unplaced: usize },

    #[error("reconfiguration failed: {0}")]
    ReconfigurationFailed(Box<Error>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from user input rather than from running a simulation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGraph(_)
                | Error::UnknownScenario(_)
                | Error::UnknownKind(_)
                | Error::UnknownPolicy(_)
                | Error::InvalidParameter(_)
                | Error::InvalidLevel { .. }
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}

fn format_issues(issues: &[GraphIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
