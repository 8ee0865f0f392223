use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate lattice: |det| = {det:e} below threshold {threshold:e}")]
    DegenerateLattice { det: f64, threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty search: no nonzero reciprocal lattice points within radius {0}")]
    EmptySearch(f64),

    #[error("malformed OFF input at line {line}: {msg}")]
    MalformedOff { line: usize, msg: String },

    #[error("open surface: edge ({0}, {1}) is not shared by exactly two oppositely oriented triangles")]
    OpenSurface(usize, usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate BEM system: condition estimate {0:e}")]
    DegenerateBem(f64),

    #[error("use dispersion_clusters: wave vector is exceptional of order {0}")]
    ExceptionalVector(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resonant z: {z} lies within {gap:e} of the pole |k - m|^2 = {pole}")]
    ResonantZ { z: f64, pole: f64, gap: f64 },

    #[error("lattice sum not converged: eta-invariance defect {0:e}")]
    LatticeSumNotConverged(f64),

    #[error("bracket invalid: f({lo}) = {f_lo:e} and f({hi}) = {f_hi:e} have the same sign")]
    BracketInvalid { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge after {0} iterations")]
    NoConvergence(usize),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBem(_)
                | Error::LatticeSumNotConverged(_)
                | Error::NoConvergence(_)
                | Error::BracketInvalid { .. }
                | Error::ResonantZ { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
