use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need at least 2 basis states")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Fock index {n} out of range for dimension {dim}")]
    OutOfRange { n: usize, dim: usize },

    #[error("truncation leakage: {what} (weight {weight:.3e}); use dim >= {min_dim}")]
    TruncationLeakage {
        what: String,
        weight: f64,
        min_dim: usize,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("target and source directions are parallel (|<phi|Psi>| = {overlap}); complement undefined")]
    ParallelTarget { overlap: f64 },

    #[error("jump-rate ratio undefined: engineered jump rate vanishes")]
    UndefinedRatio,

    #[error("Mandel Q undefined for vanishing mean photon number")]
    UndefinedQ,

    #[error("superoperator of dimension {dim} exceeds cap {cap}; use long-time integration instead")]
    DimensionCap { dim: usize, cap: usize },

    #[error("steady state is not unique (smallest singular value estimate {sigma:.3e})")]
    NonUniqueSteadyState { sigma: f64 },

    #[error("steady-state residual {residual:.3e} exceeds {limit:.1e}")]
    SteadyResidual { residual: f64, limit: f64 },

    #[error("truncation breach at t = {time}: top-level population {population:.3e}")]
    TruncationBreach { time: f64, population: f64 },

    #[error("step size underflow at t = {time} (h = {step:.3e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("recurrence blocked: zero denominator at n = {n}")]
    BlockedRecurrence { n: usize },

    #[error("distribution tail {tail:.3e} at the cutoff; increase dim beyond {dim}")]
    TailGuard { tail: f64, dim: usize },

    #[error("peak search hit the window edge at n = {n}; increase dim")]
    WindowTooSmall { n: usize },

    #[error("no residual samples inside the fit window")]
    InsufficientDecay,

    #[error("corrupted state: diagonal mass {mass} after clipping")]
    CorruptedState { mass: f64 },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by the inputs rather than by a computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidDimension(_)
                | Error::DimensionMismatch { .. }
                | Error::OutOfRange { .. }
                | Error::TruncationLeakage { .. }
                | Error::InvalidParameter { .. }
                | Error::ParallelTarget { .. }
                | Error::DimensionCap { .. }
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
