use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A vector was combined with a basis or matrix of a different length.
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A model or code parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The transmitter's span is contained in the receiver's span, so no
    /// innovative packet exists.
    #[error("no innovative packet: transmitter span is contained in receiver span")]
    NoInnovativePacket,

    /// Conditioning a delay pmf on an age that already exhausts its support.
    #[error("degenerate delay state: no residual mass after {age} slots")]
    DegenerateDelayState { age: u64 },

    /// A transcript update violated the one-packet-per-slot rule.
    #[error("scheduling invariant violated: {0}")]
    SchedulingViolation(String),

    /// A trial ran past its safety cap without the sink decoding.
    /// `sink_ranks` carries the per-chunk innovative counts at the cap.
    #[error("trial exceeded max_slots={max_slots} without delivery (sink ranks {sink_ranks:?})")]
    NonTermination {
        max_slots: u64,
        sink_ranks: Vec<u16>,
    },

    /// One or more runs of a cell failed; indices identify (realization, trial).
    #[error("{failed} of {total} runs failed, first: run {first_run:?}: {first_error}")]
    CellRunsFailed {
        failed: usize,
        total: usize,
        first_run: (u32, u32),
        first_error: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
