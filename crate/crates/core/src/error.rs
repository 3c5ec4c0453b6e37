use thiserror::Error;

/// Errors raised by the samplers, the sufficient-statistics state and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DppError {
    #[error("invalid kernel specification: {0}")]
    InvalidSpec(String),

    #[error("sample count must be at least 1")]
    EmptyRequest,

    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("near-singular Gram matrix when adding point {point:?} (Schur complement {schur:e}); the domain is saturated for this lengthscale, so draw fewer points or raise the jitter")]
    NearSingular { point: Vec<f64>, schur: f64 },

    #[error("Gram matrix factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate conditional density in dimension {dim}: total mass {total_mass:e}; the domain is saturated for this lengthscale, so draw fewer points or raise the jitter")]
    DegenerateDensity { dim: usize, total_mass: f64 },

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<DppError>,
    },

    #[error("finite-rank basis is ill-conditioned: {0}")]
    BasisConditioning(String),

    #[error("inducing points give a singular Gram matrix: {0}")]
    InducingPoints(String),

    #[error("invalid rank {rank} for dimension {dim}: {reason}")]
    InvalidRank { rank: usize, dim: usize, reason: String },

    #[error("oracle supports at most {max} dimensions, got {got}")]
    DimensionCap { max: usize, got: usize },

    #[error("rejection sampler accepted no proposals in {trials} trials")]
    NoAcceptance { trials: usize },
}

impl DppError {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        DppError::AtSample { index, source: Box::new(self) }
    }
}

pub type Result<T, E = DppError> = std::result::Result<T, E>;
