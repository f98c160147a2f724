use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("infeasible set{}: {reason}", agent.map(|i| format!(" (agent {i})")).unwrap_or_default())]
    InfeasibleSet {
        agent: Option<usize>,
        reason: String,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NumericalFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn infeasible(reason: impl Into<String>) -> Self {
        Error::InfeasibleSet {
            agent: None,
            reason: reason.into(),
        }
    }

    /// Attach an agent index, leaving already-tagged errors alone.
    pub(crate) fn for_agent(self, agent: usize) -> Self {
        match self {
            Error::InfeasibleSet {
                agent: None,
                reason,
            } => Error::InfeasibleSet {
                agent: Some(agent),
                reason,
            },
            e @ (Error::Agent { .. } | Error::InfeasibleSet { .. }) => e,
            e => Error::Agent {
                agent,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of an iterative numerical routine (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. } | Error::Internal(_) => true,
            Error::Agent { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
