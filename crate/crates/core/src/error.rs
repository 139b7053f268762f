use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A least-squares system restricted to `support` lost column rank.
    #[error(
        "numerically rank-deficient system on support {support:?}{}",
        segment.map_or(String::new(), |s| format!(" in segment {s}"))
    )]
    NumericalRank {
        support: Vec<usize>,
        segment: Option<usize>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attach a segment index to a numerical failure, leaving other errors untouched.
    pub fn in_segment(self, index: usize) -> Self {
        match self {
            Error::NumericalRank { support, .. } => Error::NumericalRank {
                support,
                segment: Some(index),
            },
            other => other,
        }
    }
}
