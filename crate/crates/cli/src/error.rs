use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Input(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ilc_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ilc_core::Error as E;
        match self {
            CliError::Core(E::SizeLimit { .. }) => EXIT_BUDGET,
            CliError::Core(E::Numerical(_) | E::NonTermination { .. } | E::Internal(_)) => {
                EXIT_NUMERICAL
            }
            _ => EXIT_INPUT,
        }
    }

    /// Extra guidance printed after the error.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(ilc_core::Error::SizeLimit { .. }) => Some(
                "raise --enumeration-budget or the quadrature budgets, switch to --inference mcmc \
                 for pooled data, or split large laboratories",
            ),
            CliError::Core(ilc_core::Error::CacheMismatch(_)) => {
                Some("rebuild the cache with `ilc cache build`")
            }
            _ => None,
        }
    }
}
