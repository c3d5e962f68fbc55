//! Failures and their exit codes.

use ising_causal::Error;

pub const SPEC: i32 = 2;
pub const PRECONDITION: i32 = 3;
pub const NUMERICAL: i32 = 4;
pub const IO: i32 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn spec(message: String) -> Self {
        Self { code: SPEC, message }
    }

    pub fn precondition(message: String) -> Self {
        Self {
            code: PRECONDITION,
            message,
        }
    }

    pub fn io(message: String) -> Self {
        Self { code: IO, message }
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::InvalidParameter(_)
            | Error::NotSymmetric { .. }
            | Error::NonZeroDiagonal { .. }
            | Error::NotASpin { .. }
            | Error::OutsideSupport { .. }
            | Error::Parse { .. } => SPEC,
            Error::PopulationTooLarge { .. }
            | Error::BlockBudgetExceeded { .. }
            | Error::LatticeBudgetExceeded { .. }
            | Error::GridTooSmall { .. } => PRECONDITION,
            Error::GridRangeExceeded { .. } | Error::NonDifferentiablePoint { .. } | Error::Numerical(_) => NUMERICAL,
            Error::Io(_) => IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::io(e.to_string())
    }
}
