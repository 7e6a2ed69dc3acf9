use thiserror::Error;

use crate::channel::LinkId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two points that enter a path-loss term coincide, so `d^-α` is singular.
    #[error("coincident points at ({x}, {y}): path loss is singular")]
    CoincidentPoints { x: f64, y: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("link length infeasible at given beta, N, P (d_max = {d_max})")]
    InfeasibleLinkLength { d_max: f64 },

    #[error("duplicate link id {0} in admission sequence")]
    DuplicateLink(LinkId),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("topology has {links} links; exhaustive mode supports at most {max}, use randomized mode")]
    TooLarge { links: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
