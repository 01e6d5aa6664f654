//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the protocol simulators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A measurement or weak value was requested on a state with zero norm.
    ZeroNormState,
    /// A control predicate passed to a one-qubit operation reads the target
    /// register, which would make the controlled action non-unitary.
    ControlReadsTarget,
    /// A 2x2 matrix failed the unitarity check.
    NotUnitary { defect: f64 },
    /// A parameter violated its documented range.
    InvalidParameter(String),
    /// A history enumeration would exceed the requested cap; `required` is
    /// the cap that would admit it.
    CapExceeded { required: u128 },
    /// Weak-value post-selection has zero overlap with the evolved state.
    ZeroPostSelectionOverlap,
    /// The requested path does not exist in the network.
    UnknownPath(String),
    /// The internal-structure expansion is only defined for computer output 1.
    UnsupportedExpansion,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroNormState => write!(f, "state has zero norm"),
            Error::ControlReadsTarget => {
                write!(f, "control predicate depends on the target register")
            }
            Error::NotUnitary { defect } => {
                write!(f, "matrix is not unitary (defect {defect:e})")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::CapExceeded { required } => write!(
                f,
                "history enumeration exceeds cap; rerun with a cap of at least {required}"
            ),
            Error::ZeroPostSelectionOverlap => {
                write!(f, "post-selection overlap is zero; weak value undefined")
            }
            Error::UnknownPath(name) => write!(f, "unknown path `{name}`"),
            Error::UnsupportedExpansion => write!(
                f,
                "internal-structure expansion is defined only for computer output 1 \
                 (the output-0 sign-change step is not specified)"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
