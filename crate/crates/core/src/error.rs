use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("camera centers coincide (baseline {0:.3e})")]
    CoincidentCenters(f64),
    #[error("tensor is rank deficient")]
    RankDeficient,
    #[error("epipolar line has vanishing normal")]
    DegenerateLine,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("cheirality vote is tied between pose candidates")]
    AmbiguousCheirality,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("index {index} out of range for {n} cameras")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("block ({0}, {1}) is not rank 2")]
    RankNot2(usize, usize),
    #[error("columns are not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),

    #[error("triplet cover is not connected")]
    NotConnected,
    #[error("no measured block for edge ({0}, {1})")]
    MissingBlock(usize, usize),
    #[error("ADMM did not converge after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NoConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),
    #[error("rotation cycle residual {0:.3e} exceeds tolerance")]
    CyclicInconsistency(f64),
    #[error("insufficient tracks: {0}")]
    InsufficientTracks(String),
    #[error("degenerate epipole or rank-deficient track system")]
    DegenerateEpipole,
    #[error("alignment system is ill conditioned (ratio {0:.3e})")]
    AlignmentIllConditioned(f64),

    #[error("no 3-view track passes the epipole filter")]
    NoValidPoint,
    #[error("relative rotation cannot be disambiguated")]
    RotationAmbiguity,
    #[error("projective recovery missing for triplet")]
    MissingRecovery,
    #[error("virtual point is degenerate: {0}")]
    DegenerateVirtualPoint(String),

    #[error("need at least 3 cameras, got {0}")]
    TooFewCameras(usize),
    #[error("viewing graph has no triangles")]
    NoTriangles,
    #[error("cover components cannot be connected through the full cover")]
    Unconnectable,

    #[error("need at least {need} correspondences, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input rather than
    /// numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NoConvergence { .. } | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
