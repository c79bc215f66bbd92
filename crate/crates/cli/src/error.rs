use std::fmt;
use std::io;

use tclsim_core::Error as CoreError;

/// Failure of a CLI run, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or parameters. Exit code 2.
    Validation(String),
    /// One or more acceptance bounds failed. Exit code 3.
    Acceptance(Vec<String>),
    /// Solver breakdown or positivity breach. Exit code 4.
    Numerical(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Acceptance(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Acceptance(failed) => {
                write!(f, "acceptance check failed:")?;
                for line in failed {
                    write!(f, "\n  {line}")?;
                }
                Ok(())
            }
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonPositiveParameter { .. }
            | CoreError::InvalidInitialState { .. }
            | CoreError::InvalidGrid(_)
            | CoreError::NotStrongCoupling { .. }
            | CoreError::StepTooLarge { .. }
            | CoreError::DegenerateAmplitude
            | CoreError::PoleAtGridEnd { .. }
            | CoreError::RegimeViolation { .. }
            | CoreError::InsufficientPoints { .. }
            | CoreError::ProbePastPole { .. }
            | CoreError::InvalidOption(_) => CliError::Validation(e.to_string()),
            CoreError::NormViolation { .. }
            | CoreError::AtPole { .. }
            | CoreError::StepProbabilityOverflow { .. }
            | CoreError::EmptyTargetClass { .. }
            | CoreError::GridMismatch
            | CoreError::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
