//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Failure modes of the geometry, synthesis and bound computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point coincides with the coordinate origin where spherical
    /// coordinates are undefined.
    DegeneratePoint,
    /// A point lies within `POLAR_AXIS_TOL` of the polar axis, where the
    /// azimuth derivative blows up.
    PolarAxis,
    /// A field point coincides with an array element, so the element response
    /// is undefined. Carries the element index.
    SingularGeometry(usize),
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch { expected: usize, got: usize },
    /// A lookup table was constructed with no values.
    EmptyTable,
    /// A lookup-table entry exceeds unit magnitude. Carries the offending
    /// row (1-based, as in the source file) and the magnitude found.
    Passivity { row: usize, magnitude: f64 },
    /// A table file or table text could not be parsed. Carries the 1-based
    /// line number and a description.
    TableParse { line: usize, message: String },
    /// The synthesis objective became non-finite.
    Divergence,
    /// The Fisher information matrix is singular or too ill-conditioned to
    /// invert; the configuration carries no usable position information.
    SingularFim,
    /// No allocation on the simplex yields an invertible information matrix.
    Unlocalizable,
    /// The steering vector and its derivatives are linearly dependent, so no
    /// orthonormal beam basis exists.
    DegenerateBasis,
    /// A parameter is outside its documented domain.
    InvalidParameter(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegeneratePoint => write!(f, "point coincides with the origin"),
            Error::PolarAxis => write!(f, "point lies on the polar axis"),
            Error::SingularGeometry(m) => {
                write!(f, "field point coincides with array element {m}")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::EmptyTable => write!(f, "lookup table has no values"),
            Error::Passivity { row, magnitude } => write!(
                f,
                "row {row}: coefficient magnitude {magnitude} exceeds unity (passive RIS)"
            ),
            Error::TableParse { line, message } => write!(f, "line {line}: {message}"),
            Error::Divergence => write!(f, "synthesis objective became non-finite"),
            Error::SingularFim => write!(f, "Fisher information matrix is singular"),
            Error::Unlocalizable => {
                write!(f, "no power allocation yields an invertible information matrix")
            }
            Error::DegenerateBasis => {
                write!(f, "steering vector and derivatives are linearly dependent")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
