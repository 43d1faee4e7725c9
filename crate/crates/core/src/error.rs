use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants split into two families: parameter/validation problems, and
/// numerical degeneracies detected while computing (see [`Error::is_numerical`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index:?} lies outside the truncated lattice")]
    OutOfLattice { index: Vec<i64> },

    #[error("index {index:?} cannot be encoded at resolution q={q}")]
    NotEncodable { index: Vec<i64>, q: u32 },

    #[error("observable is not real-valued (conjugate symmetry violated by {defect:e})")]
    NonRealObservable { defect: f64 },

    #[error("zero evidence: observation likelihood integrates to {evidence:e} against the prior")]
    ZeroEvidence { evidence: f64 },

    #[error("rank-deficient Gram matrix: {deficient} of {total} directions are unresolved by the trajectory")]
    RankDeficient { deficient: usize, total: usize },

    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("compressed density operator has zero trace")]
    ZeroTrace,

    #[error("frequency vector is not affine in the qubit bits (Walsh coefficient of weight {weight} is {value:e})")]
    NotAffine { weight: u32, value: f64 },

    #[error("degenerate normalization: |h| = {value:e} is below {threshold:e}")]
    DegenerateNormalization { value: f64, threshold: f64 },

    #[error("filter aborted at step {step}: {source}")]
    FilterAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures caused by numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroEvidence { .. }
                | Error::RankDeficient { .. }
                | Error::NotUnitary { .. }
                | Error::ZeroTrace
                | Error::NotAffine { .. }
                | Error::DegenerateNormalization { .. }
                | Error::FilterAborted { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
