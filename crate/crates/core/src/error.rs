use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or config field is outside its admissible range.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Input sequences are inconsistent with each other or with the grid.
    #[error("invalid input: {0}")]
    Input(String),

    /// Market clearing did not converge within the iteration cap.
    #[error("market clearing did not converge after {iterations} iterations (log M bracket [{lo}, {hi}])")]
    Convergence { iterations: usize, lo: f64, hi: f64 },

    /// Market clearing failed at a specific grid step of a simulated path.
    #[error("numerical failure at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Two survival indices tie within tolerance, so no unique dominant agent exists.
    #[error("no unique dominant agent: agents {first} and {second} have survival indices within {tolerance:e}")]
    Ambiguous {
        first: usize,
        second: usize,
        tolerance: f64,
    },

    #[error("decay fit window is empty")]
    EmptyWindow,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config serialization error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Configuration problems (bad fields, violated assumptions) as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Toml(_) | Error::Ambiguous { .. }
        )
    }
}
