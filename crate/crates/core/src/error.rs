use thiserror::Error;

/// Errors produced anywhere in the engine.
///
/// Each variant names the module that raised it so that the CLI can map it to
/// an exit code and a provenance tag.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice: {0}")]
    Lattice(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("site index {site} out of range for {n} sites")]
    InvalidSite { site: usize, n: usize },
    #[error("spin entries must be exactly +1 or -1 (found {0} at position {1})")]
    InvalidSpin(i8, usize),
    #[error("sampler: non-finite amplitude ratio encountered ({0})")]
    NonFinite(String),
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("hamiltonian: {0}")]
    Hamiltonian(String),
    #[error("dynamics: linear solve failed after {attempts} regularization attempts (last shift {shift:e})")]
    SolveFailed { attempts: usize, shift: f64 },
    #[error("dynamics: {0}")]
    Dynamics(String),
    #[error("overlap: unreliable estimate ({0})")]
    UnreliableEstimate(String),
    #[error("oracle: {n} spins exceeds the dense cap of {cap}")]
    OracleCap { n: usize, cap: usize },
    #[error("oracle: Krylov exponential did not converge ({0})")]
    KrylovNonConvergence(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("format: {0}")]
    Format(String),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from a numerical failure (as opposed to bad
    /// input or a configuration mistake).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::SolveFailed { .. }
                | Error::Dynamics(_)
                | Error::UnreliableEstimate(_)
                | Error::KrylovNonConvergence(_)
                | Error::Fit(_)
                | Error::Sampler(_)
                | Error::Hamiltonian(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
