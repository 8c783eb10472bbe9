use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph: {0}")]
    Graph(String),

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("edge ({0}, {1}) has an endpoint outside [0, {2})")]
    NodeOutOfRange(usize, usize, usize),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("{what} length mismatch: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("complete graph required")]
    CompleteGraphRequired,

    #[error("integration step underflow at t = {time}: last valid state {state:?}")]
    StepUnderflow { time: f64, state: Vec<f64> },

    #[error("insufficient horizon: need raw time {needed}, trajectory covers {available}")]
    InsufficientHorizon { needed: f64, available: f64 },

    #[error("horizon {horizon} is not before the fluid exit time {exit_time}; convergence on a general graph only holds strictly before the first time a queue empties")]
    HorizonPastExit { horizon: f64, exit_time: f64 },

    #[error("localization box empty: every replica leaves it at time 0")]
    EmptyLocalization,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Graph(_)
                | Error::SelfLoop(_)
                | Error::DuplicateEdge(..)
                | Error::NodeOutOfRange(..)
                | Error::LengthMismatch { .. }
                | Error::InvalidParameter { .. }
                | Error::CompleteGraphRequired
                | Error::HorizonPastExit { .. }
                | Error::Config(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
