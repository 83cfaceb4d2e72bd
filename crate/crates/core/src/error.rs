use thiserror::Error;

use crate::model::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Harmonic schedule evaluated where `k + d = 0`.
    #[error("degenerate schedule: harmonic magnitude c/(k+d) diverges at k={k} with d={d}")]
    DegenerateSchedule { k: u64, d: f64 },

    #[error("node {0} is not a member of the ring")]
    NotMember(NodeId),

    #[error("node {0} is already a member of the ring")]
    AlreadyMember(NodeId),

    /// Leave would shrink the ring below three members.
    #[error("membership floor: ring of {members} nodes cannot lose {node}, at least 3 must remain")]
    MembershipFloor { node: NodeId, members: usize },

    #[error("estimator window for node {node} holds {have} of {need} states")]
    WindowNotFull { node: NodeId, have: usize, need: usize },

    #[error("schedules mix harmonic and geometric families")]
    MixedFamilies,

    #[error("{0}")]
    NonLaplace(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Tradeoff cubic has no positive root (constant term vanishes when K < 2).
    #[error("degenerate tradeoff: {0}")]
    DegenerateTradeoff(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
