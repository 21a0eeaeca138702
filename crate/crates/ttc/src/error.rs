//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Unified error type. Variants map one-to-one onto the failure classes the
/// toolkit can hit: bad caller input, data that cannot support the requested
/// statistic, unreachable operating points, training or calibration collapse,
/// numeric blowup inside the network, and file-format problems.
#[derive(Error, Debug)]
pub enum TtcError {
    /// Caller passed something structurally invalid (wrong length, bad range,
    /// mismatched grids, unknown names).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input is well-formed but degenerate for the operation (e.g. a pair set
    /// with no negative pairs cannot produce a TNR curve).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// No threshold on the grid attains the requested target. Carries the
    /// best attainable value so callers can decide whether to relax.
    #[error("unreachable target: requested {requested}, best attainable {best}")]
    UnreachableTarget { requested: f64, best: f64 },

    /// The transductive estimator could not produce usable pooled counts.
    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    /// Training could not make progress (e.g. most batches degenerate).
    #[error("training failure: {0}")]
    TrainingFailure(String),

    /// A non-finite value appeared inside the network; names the layer.
    #[error("numeric overflow in {0}")]
    NumericOverflow(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not match its declared format; message carries location.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TtcError>;
