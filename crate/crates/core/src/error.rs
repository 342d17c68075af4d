use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A derivative beyond the field's declared order was requested.
    OrderExceeded { requested: u32, max_order: u32 },
    /// A kernel or statistic was asked for at `t <= 0`.
    NonpositiveTime(f64),
    /// A coordinate that must be positive was not.
    NonpositiveCoordinate(f64),
    /// The finite-difference step does not fit inside the time interval.
    StepTooLarge { h: f64, t: f64 },
    /// The problem does not satisfy the assumptions the operation relies on.
    InvalidSpec(&'static str),
    /// A density field does not live on the grid the operation expects.
    GridMismatch,
    /// The Volterra series did not settle within the iteration cap.
    NonConvergence { iterations: usize, last_norm: f64 },
    /// A probe point lies outside the open domain or the solved window.
    OutOfDomain { t: f64, x: f64, y: f64 },
    /// Test points are too close to the boundary for the requested step.
    MarginViolation,
    /// A configuration value is out of range.
    BadConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::OrderExceeded { requested, max_order } => {
                write!(f, "derivative order {requested} exceeds field order {max_order}")
            }
            Error::NonpositiveTime(t) => write!(f, "time must be positive, got {t}"),
            Error::NonpositiveCoordinate(x) => write!(f, "coordinate must be positive, got {x}"),
            Error::StepTooLarge { h, t } => write!(f, "step {h} too large for time {t}"),
            Error::InvalidSpec(why) => write!(f, "invalid problem: {why}"),
            Error::GridMismatch => write!(f, "density field does not match the solver grid"),
            Error::NonConvergence { iterations, last_norm } => write!(
                f,
                "Volterra series did not converge after {iterations} iterations (last norm {last_norm:e})"
            ),
            Error::OutOfDomain { t, x, y } => {
                write!(f, "point (t={t}, x={x}, y={y}) is outside the solved domain")
            }
            Error::MarginViolation => write!(f, "test point too close to the boundary for the step"),
            Error::BadConfig(why) => write!(f, "bad configuration: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
