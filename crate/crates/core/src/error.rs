use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} requires {size} units of work, above the configured limit of {limit}")]
    SizeLimit {
        what: String,
        size: u128,
        limit: u128,
    },

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("sampler gave up after {iterations} rejected proposals")]
    NonTermination { iterations: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("cache file rejected: {0}")]
    CacheMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn size_limit(what: impl Into<String>, size: u128, limit: u128) -> Self {
        Error::SizeLimit {
            what: what.into(),
            size,
            limit,
        }
    }

    pub(crate) fn domain(value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            value,
            domain: domain.into(),
        }
    }
}
