//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the inference engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Dimension mismatch between two operands; carries both shapes.
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// An operation received an empty input where at least one element is required.
    EmptyInput(&'static str),
    /// Input shorter than the front end's minimum receptive field.
    InsufficientFrames { required: usize, got: usize },
    /// Configuration violates a structural invariant.
    Config(String),
    /// A non-finite value was found where finite data is required.
    NonFinite(&'static str),
    /// An API contract was violated by the caller.
    Contract(&'static str),
    /// A named tensor is missing from a weight set.
    MissingTensor(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::EmptyInput(what) => write!(f, "{what}: empty input"),
            Error::InsufficientFrames { required, got } => write!(
                f,
                "input has {got} frames but the subsampling front end needs at least {required}"
            ),
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::NonFinite(what) => write!(f, "{what}: non-finite value"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::MissingTensor(name) => write!(f, "weight set has no tensor named {name}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
