use thiserror::Error;

/// Errors raised by the valuation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine failed (non-convergence, non-finite values, broken invariant).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The LP backend did not return an optimal solution.
    #[error("solver error: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Block coordinate descent stopped early; `log` holds the completed rows.
    #[error("block coordinate descent aborted after {} sub-problems: {source}", log.len())]
    Aborted {
        log: Vec<crate::solve::SweepRow>,
        #[source]
        source: Box<Error>,
    },

    /// An error tagged with the pipeline phase and instance in which it occurred.
    #[error("instance `{instance}`, phase `{phase}`: {source}")]
    Phase {
        instance: String,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Innermost error, skipping phase tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Phase { source, .. } | Error::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
