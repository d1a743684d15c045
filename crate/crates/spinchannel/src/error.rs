use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("site index {site} out of range 1..={length}")]
    SiteOutOfRange { site: usize, length: usize },

    #[error("qubit index {qubit} out of range 1..={n_qubits}")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error(
        "degenerate ground state: min quasiparticle energy {energy:.3e} below {threshold:.1e} \
         (gamma={gamma}, lambda={lambda}, L={length}); rerun with the leave-empty zero-mode policy \
         to accept one parity sector"
    )]
    DegenerateGroundState {
        energy: f64,
        threshold: f64,
        gamma: f64,
        lambda: f64,
        length: usize,
    },

    #[error("size limit exceeded: {what} = {requested} > maximum {max}")]
    SizeLimitExceeded {
        what: &'static str,
        requested: usize,
        max: usize,
    },

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error(
        "insufficient fit window: {points} points at or above threshold {threshold} (need >= {min_points})"
    )]
    InsufficientWindow {
        points: usize,
        threshold: f64,
        min_points: usize,
    },

    #[error("no revival found in the supplied time window")]
    NoRevivalFound,

    #[error("purity must be in (0, 1], got {0}")]
    NonPositivePurity(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
