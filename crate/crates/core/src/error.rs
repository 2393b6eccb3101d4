//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters (k1={k1}, k2={k2}, tau={tau}): {reason}")]
    InvalidParams {
        k1: f64,
        k2: f64,
        tau: f64,
        reason: &'static str,
    },

    #[error("invalid vehicle state (v={v}, s={s}): need s > 0 and v >= 0")]
    InvalidState { v: f64, s: f64 },

    #[error("timestep must be positive, got {0}")]
    InvalidTimestep(f64),

    #[error("degenerate dynamics: |a12| = {a12_abs:e} leaves the time gap undefined")]
    DegenerateDynamics { a12_abs: f64 },

    #[error("malformed csv at line {line}: {msg}")]
    MalformedCsv { line: usize, msg: String },

    #[error("missing column `{0}` in csv header")]
    MissingColumn(&'static str),

    #[error("non-uniform timestamps at row {row}: interval {got} versus expected {expected}")]
    NonUniformTimestamps { row: usize, got: f64, expected: f64 },

    #[error("non-positive space gap {value} at row {row}")]
    NonPositiveGap { row: usize, value: f64 },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("series length mismatch: {left} versus {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("timestamps must be strictly increasing; violated at index {index}")]
    NonMonotonicTimes { index: usize },

    #[error("sample periods differ: {left} versus {right}; resample before comparing")]
    MismatchedSampleRate { left: f64, right: f64 },

    #[error("histogram bin width must be positive, got {0}")]
    InvalidBinWidth(f64),

    #[error("empty input series")]
    EmptyInput,

    #[error("invalid lead profile: {0}")]
    InvalidLeadProfile(String),

    #[error(
        "overlapping lead-profile events: event {index} ramps until t={ramp_end}s \
         but the next event starts at t={next_start}s"
    )]
    OverlappingEvents {
        index: usize,
        ramp_end: f64,
        next_start: f64,
    },

    #[error("trajectory collapse: space gap reached {gap} m at step {step}")]
    TrajectoryCollapse { step: usize, gap: f64 },

    #[error("platoon collapse: vehicle {vehicle} closed its space gap at step {step}")]
    PlatoonCollapse { vehicle: usize, step: usize },

    #[error("platoon lead profile must hold a constant speed for the first {required} s")]
    PlatoonLeadIn { required: f64 },

    #[error("invalid platoon request: {0}")]
    InvalidPlatoon(String),

    #[error(
        "rank-deficient regressor: sigma_min/sigma_max = {ratio:e} is below {threshold:e}; \
         the data does not excite all three parameters"
    )]
    RankDeficient { ratio: f64, threshold: f64 },

    #[error("invalid batch config: {0}")]
    InvalidBatchConfig(String),

    #[error("invalid particle-filter config: {0}")]
    InvalidPfConfig(String),

    #[error("all particle weights underflowed to zero at step {step}")]
    WeightCollapse { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse classification used by callers that map errors to process exit
    /// codes: configuration/validation problems, input-data problems, and
    /// failures of an estimation or simulation run.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidParams { .. }
            | InvalidState { .. }
            | InvalidTimestep(_)
            | InvalidLeadProfile(_)
            | OverlappingEvents { .. }
            | PlatoonLeadIn { .. }
            | InvalidPlatoon(_)
            | InvalidBatchConfig(_)
            | InvalidPfConfig(_)
            | InvalidBinWidth(_) => ErrorCategory::Validation,
            MalformedCsv { .. }
            | MissingColumn(_)
            | NonUniformTimestamps { .. }
            | NonPositiveGap { .. }
            | TooFewSamples { .. }
            | LengthMismatch { .. }
            | NonMonotonicTimes { .. }
            | MismatchedSampleRate { .. }
            | EmptyInput
            | Io(_) => ErrorCategory::Data,
            DegenerateDynamics { .. }
            | TrajectoryCollapse { .. }
            | PlatoonCollapse { .. }
            | RankDeficient { .. }
            | WeightCollapse { .. } => ErrorCategory::Estimation,
        }
    }
}

/// See [`Error::category`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Data,
    Estimation,
}
