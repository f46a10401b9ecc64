use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    Network(String),
    #[error("unknown lane \"{lane}\" referenced by {context}")]
    UnknownLane { lane: String, context: String },
    #[error("invalid demand: {0}")]
    Demand(String),
    #[error("unknown intersection index {0}")]
    UnknownIntersection(usize),
    #[error("intersection {intersection} has no phase {phase}")]
    UnknownPhase { intersection: usize, phase: usize },
    #[error("signal command covers {got} intersections, network has {expected}")]
    CommandCount { expected: usize, got: usize },
    #[error("phase duration {seconds} s outside [{min}, {max}]")]
    DurationOutOfBounds { seconds: u32, min: u32, max: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not belong to this parameter set")]
    StaleCache,
    #[error("need at least {needed} samples, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
