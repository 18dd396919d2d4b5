//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter violates its domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// The characteristic-root scan failed to bracket the requested roots.
    #[error("root search failed: {0}")]
    RootSearch(String),

    /// A mode-shape linear system was too ill-conditioned to trust.
    #[error("mode {index}: boundary-condition system ill-conditioned ({detail})")]
    Conditioning { index: usize, detail: String },

    /// The discrete mode and the continuous state disagree.
    #[error("hybrid state inconsistent: {0}")]
    HybridConsistency(String),

    /// Event localization or transition handling broke down.
    #[error("event handling failed at t = {time}: {detail}")]
    EventConsistency { time: f64, detail: String },

    /// The adaptive integrator stalled (step-size underflow or event chatter).
    #[error("integration stalled at t = {time}: {detail}")]
    IntegrationStall { time: f64, detail: String },

    /// Reduced-model assembly produced an unusable operator.
    #[error("ROM assembly failed: {0}")]
    Assembly(String),

    /// Two records could not be aligned for comparison.
    #[error("alignment failed: {0}")]
    Alignment(String),

    /// An input artifact is malformed or missing required content.
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
