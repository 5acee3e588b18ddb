use thiserror::Error;

use crate::closed::ClosedError;
use crate::connection::ConnectionError;
use crate::flow::FlowError;
use crate::linalg::LinalgError;
use crate::ode::OdeError;
use crate::special::SpecialError;
use crate::stokes::StokesError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_NONCONVERGENCE: i32 = 5;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tolerance check failed: {0}")]
    ToleranceFailure(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Closed(#[from] ClosedError),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Schema,
    Tolerance,
    Degenerate,
    NonConvergence,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Schema => EXIT_SCHEMA,
            ErrorClass::Tolerance => EXIT_TOLERANCE,
            ErrorClass::Degenerate => EXIT_DEGENERATE,
            ErrorClass::NonConvergence => EXIT_NONCONVERGENCE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Schema => "schema",
            ErrorClass::Tolerance => "tolerance",
            ErrorClass::Degenerate => "degenerate-input",
            ErrorClass::NonConvergence => "non-convergence",
        }
    }
}

fn linalg_class(e: &LinalgError) -> ErrorClass {
    use LinalgError::*;
    match e {
        ConvergenceFailure { .. } => ErrorClass::NonConvergence,
        OverflowRisk { .. } | Singular => ErrorClass::Tolerance,
        NonHermitianInput { .. }
        | NotSquare { .. }
        | NonFinite
        | NonPositiveBase(_)
        | IndexOutOfRange { .. }
        | MismatchedSelection { .. }
        | InvalidPermutation(_)
        | DimensionMismatch(..) => ErrorClass::Degenerate,
    }
}

fn flow_class(e: &FlowError) -> ErrorClass {
    use FlowError::*;
    match e {
        Linalg(e) => linalg_class(e),
        Special(_) => ErrorClass::Degenerate,
        FixedPointDivergence { .. } => ErrorClass::NonConvergence,
        StepSizeUnderflow { .. } | ToleranceNotMet { .. } | HermiticityDrift { .. } => ErrorClass::Tolerance,
        DegenerateU { .. }
        | NonFiniteU
        | NonzeroDiagonal { .. }
        | DimensionMismatch { .. }
        | EmptyPath
        | NonPositiveRatio { .. }
        | RhoTooSmall { .. } => ErrorClass::Degenerate,
    }
}

fn stokes_class(e: &StokesError) -> ErrorClass {
    use StokesError::*;
    match e {
        Linalg(e) => linalg_class(e),
        Special(_) => ErrorClass::Degenerate,
        Propagation(OdeError::StepSizeUnderflow { .. } | OdeError::ToleranceNotMet { .. })
        | TriangularityViolation { .. }
        | ConditioningFailure(_) => ErrorClass::Tolerance,
        DegenerateU { .. }
        | DimensionMismatch { .. }
        | InvalidOrder
        | PathCrossesCut { .. }
        | AnchorTooClose { .. } => ErrorClass::Degenerate,
    }
}

fn closed_class(e: &ClosedError) -> ErrorClass {
    match e {
        ClosedError::Linalg(e) => linalg_class(e),
        _ => ErrorClass::Degenerate,
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SchemaViolation { .. } | Error::Io { .. } => ErrorClass::Schema,
            Error::ToleranceFailure(_) => ErrorClass::Tolerance,
            Error::Linalg(e) => linalg_class(e),
            Error::Special(_) => ErrorClass::Degenerate,
            Error::Flow(e) => flow_class(e),
            Error::Stokes(e) => stokes_class(e),
            Error::Closed(e) => closed_class(e),
            Error::Connection(e) => match e {
                ConnectionError::Flow(e) => flow_class(e),
                ConnectionError::Stokes(e) => stokes_class(e),
                ConnectionError::Closed(e) => closed_class(e),
                ConnectionError::Linalg(e) => linalg_class(e),
                ConnectionError::NonConvergence { .. } => ErrorClass::NonConvergence,
                ConnectionError::DimensionMismatch(..)
                | ConnectionError::WrongDimension(_)
                | ConnectionError::NoZeroEigenvalue { .. } => ErrorClass::Degenerate,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::schema("tol", "must be positive").exit_code(), 2);
        assert_eq!(Error::ToleranceFailure("x".into()).exit_code(), 3);
        let deg: Error = FlowError::DegenerateU { index: 0, gap: 0.0, floor: 1e-10 }.into();
        assert_eq!(deg.exit_code(), 4);
        let nc: Error = FlowError::FixedPointDivergence { iterations: 200, residual: 1.0 }.into();
        assert_eq!(nc.exit_code(), 5);
        let tri: Error = StokesError::TriangularityViolation { defect: 1.0, tol: 1e-8 }.into();
        assert_eq!(tri.exit_code(), 3);
        let pvi: Error = ConnectionError::WrongDimension(2).into();
        assert_eq!(pvi.exit_code(), 4);
    }
}
