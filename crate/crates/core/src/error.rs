use thiserror::Error;

/// Errors raised by graph construction, estimation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rigidity rank test needs at least {required} agents in {dimension}D, got {agents}")]
    TooFewAgents {
        agents: usize,
        dimension: usize,
        required: usize,
    },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("token vector has {got} entries, graph has {expected} edges")]
    TokenLength { expected: usize, got: usize },

    #[error("healthy links do not span the formation: {}", format_partition(.components))]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("anchored normal matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("agent index {index} out of range for {agents} agents")]
    AgentOutOfRange { index: usize, agents: usize },

    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Renders a vertex partition with 1-based labels, e.g. `{1} | {2,3}`.
pub fn format_partition(components: &[Vec<usize>]) -> String {
    components
        .iter()
        .map(|c| {
            let inner: Vec<String> = c.iter().map(|v| (v + 1).to_string()).collect();
            format!("{{{}}}", inner.join(","))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}
