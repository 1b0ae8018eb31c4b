use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("rateless code has an unbounded coded id space")]
    UnboundedIdSpace,

    #[error("no packet available to sample")]
    EmptyBuffer,

    #[error("packet of {packet_bytes} bytes cannot hold a {signature_bytes}-byte signature")]
    SignatureTooLarge { packet_bytes: u32, signature_bytes: u32 },

    #[error("road graph line {line}: {reason}")]
    RoadGraph { line: usize, reason: String },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("T = {t} exceeds the largest admissible round time {t_max}")]
    NoFixedPoint { t: f64, t_max: f64 },

    #[error("step too coarse: node {node} overshot its crossing by {overshoot:e} at t = {t}")]
    StepTooCoarse { node: usize, t: f64, overshoot: f64 },

    #[error("trajectories lost their order at node {node}, t = {t} (gap {gap:e})")]
    OrderViolated { node: usize, t: f64, gap: f64 },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
