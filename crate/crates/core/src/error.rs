use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural problems found while building a [`crate::metric_graph::MetricGraph`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references unknown vertex `{vertex}`")]
    UnknownVertex { edge: String, vertex: String },
    #[error("edge `{edge}` has non-positive or non-finite length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("edge `{0}` is a self-loop")]
    SelfLoop(String),
    #[error("vertex `{0}` has no incident edge")]
    IsolatedVertex(String),
    #[error("graph is disconnected: `{0}` is unreachable from `{1}`")]
    Disconnected(String, String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(#[from] GraphError),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid quantile function: {0}")]
    InvalidQuantile(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("edge `{0}` is not minimizing")]
    NonMinimizingEdge(String),
    #[error("support cap exceeded: problem needs {size} coupling variables, cap is {cap}")]
    SupportCapExceeded { size: usize, cap: usize },
    #[error("value {0} lies within tolerance of an exceptional value")]
    Exceptional(f64),
    #[error("no geodesic class matches pair ({0})")]
    Unclassifiable(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("cannot read `{path}`: {reason}")]
    FileNotFound { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Stable machine-readable code, used by the command-line tool.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid-graph",
            Error::InvalidPoint(_) | Error::InvalidMeasure(_) | Error::InvalidQuantile(_) => "invalid-measure",
            Error::InvalidArgument(_) | Error::Exceptional(_) => "invalid-argument",
            Error::NonMinimizingEdge(_) => "non-minimizing-edge",
            Error::SupportCapExceeded { .. } => "support-cap-exceeded",
            Error::FileNotFound { .. } => "file-not-found",
            Error::Parse(_) => "parse-error",
            Error::Unclassifiable(_) | Error::Solver(_) | Error::Internal(_) => "solver-failure",
        }
    }
}
