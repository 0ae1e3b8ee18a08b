use thiserror::Error;

/// Process exit status for each failure class.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] mfg_core::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for violated invariants or assumptions, 3 for non-convergence,
    /// 1 for everything else (bad input, I/O).
    pub fn exit_code(&self) -> i32 {
        use mfg_core::Error as E;
        match self {
            CliError::Validation(_) | CliError::Check(_) => EXIT_INVARIANT,
            CliError::Core(e) => match e {
                E::NotConverged { .. } | E::SolverDiverged { .. } => EXIT_NOT_CONVERGED,
                E::CflViolated { .. }
                | E::NegativeDensity { .. }
                | E::PositivityLost { .. }
                | E::OrderViolated { .. }
                | E::AssumptionViolated { .. }
                | E::FeedbackOutOfDomain => EXIT_INVARIANT,
                _ => EXIT_FAILURE,
            },
            _ => EXIT_FAILURE,
        }
    }
}
