use dromor::io::FileError;
use dromor::validation::ValidationError;
use dromor::ReductionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("error bound violated")]
    BoundViolated,
}

impl CliError {
    /// 0 ok, 1 input, 2 infeasible, 3 solver failure, 4 bound violated.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::File(_) | CliError::Write { .. } => 1,
            CliError::Reduction(e) => reduction_code(e),
            CliError::Validation(ValidationError::Reduction(e)) => reduction_code(e),
            CliError::Validation(_) => 1,
            CliError::BoundViolated => 4,
        }
    }
}

fn reduction_code(e: &ReductionError) -> u8 {
    if e.is_infeasible() {
        2
    } else if e.is_solver_failure() {
        3
    } else {
        1
    }
}
