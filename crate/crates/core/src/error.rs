use alloc::string::String;

/// Errors raised by the core numerics, model, losses and training code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two operands have incompatible shapes.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// A node that must be 1x1 is not.
    #[error("expected a scalar (1x1), got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    /// A hyper-parameter or argument is outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A class label is outside `0..classes`.
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    Label { row: usize, label: usize, classes: usize },

    /// A data protocol guarantee is violated (empty class, empty domain, ...).
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A loss builder returned different values for identical inputs.
    #[error("loss builder is not deterministic: {first} != {second}")]
    Determinism { first: f64, second: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
