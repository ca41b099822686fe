//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An index tuple that is not strictly increasing or out of range.
    #[error("invalid index tuple {indices:?} for n = {n}: {reason}")]
    InvalidIndex {
        indices: Vec<usize>,
        n: usize,
        reason: &'static str,
    },

    /// Dimension mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed `.tns` file.
    #[error("bad tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Refused to allocate a tensor above the configured memory cap.
    #[error("tensor needs {needed} bytes, above the cap of {cap} bytes (set TENSORSPIKE_MEM_CAP_GB to raise it)")]
    MemoryCap { needed: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The channel has zero Fisher information at w = 0.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// The tilted prior measure cannot be normalized (e.g. Gaussian with 1 + A ≤ 0).
    #[error("prior measure is not normalizable: {0}")]
    NonNormalizable(String),

    /// An operation that needs the planted signal was called without one.
    #[error("ground truth required for {0}")]
    MissingTruth(&'static str),

    /// AMP produced a non-finite message.
    #[error("AMP diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// A numerical routine produced a non-finite or otherwise unusable value.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// The requested analysis does not apply to this prior / order.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A bisection bracket does not straddle the transition.
    #[error("bracket [{lo}, {hi}] does not straddle the transition")]
    Bracket { lo: f64, hi: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Exact enumeration would exceed the state-space cap.
    #[error("state space of {states} configurations exceeds the cap of {cap}")]
    Capacity { states: u128, cap: u128 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
