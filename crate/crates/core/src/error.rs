use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::net::NetworkParams;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label {label} at index {index} is outside [0, {classes})")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },

    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },

    #[error("need at least {required} points to cover every class, only {available} available")]
    TooFewForStratified { required: usize, available: usize },

    #[error("classification needs at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("labeled points do not cover class {0}")]
    MissingClass(usize),

    #[error("template index {0} is out of range or duplicated")]
    BadTemplate(usize),

    #[error("graph component of {} point(s) has no labeled point (first: {:?})", .points.len(), .points.first())]
    UncoveredComponent { points: Vec<usize> },

    #[error("conjugate gradient did not converge for class {column}: residual {residual:e} after {iterations} iterations")]
    NotConverged { column: usize, iterations: usize, residual: f64 },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training diverged in pass {pass}, epoch {epoch}")]
    Diverged { pass: usize, epoch: usize, last_good: Box<NetworkParams> },

    #[error("every WNLL batch was skipped in pass {pass}")]
    AllBatchesSkipped { pass: usize },
}
