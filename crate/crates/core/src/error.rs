use thiserror::Error;

use crate::frames::FrameTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} joint values, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("wrench frame mismatch: expected {expected:?}, got {actual:?}")]
    FrameMismatch { expected: FrameTag, actual: FrameTag },

    #[error("virtual inertia (H + λI) is not positive definite at q = {q:?}")]
    NotPositiveDefinite { q: Vec<f64> },

    #[error("degenerate contact: coincident centers")]
    DegenerateContact,

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure at tick {tick}: {source}")]
    Numerical {
        tick: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
