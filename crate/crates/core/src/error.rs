use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Reason a statistic could not be formed from the data at hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Degeneracy {
    /// Every proxy weight is zero.
    ZeroWeights,
    /// The observed information of the working likelihood is not positive.
    NonpositiveInformation,
    /// The positive-control mean (times the root mean square weight) is not positive.
    NonpositiveControlMean,
}

impl Degeneracy {
    pub fn code(self) -> &'static str {
        match self {
            Degeneracy::ZeroWeights => "zero-weights",
            Degeneracy::NonpositiveInformation => "nonpositive-information",
            Degeneracy::NonpositiveControlMean => "nonpositive-control-mean",
        }
    }
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(Degeneracy),

    /// Malformed input file; the message names the location and field.
    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Validation failures (bad arguments, bad files) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Parse(_))
    }
}
