use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("infinite skin depth: medium is lossless")]
    InfiniteSkinDepth,

    #[error("evaluation point within {distance:e} m of a dipole")]
    Singularity { distance: f64 },

    #[error("invalid case index {0} (expected 1..=11)")]
    InvalidCase(usize),

    #[error("field is identically zero in the volume")]
    ZeroField,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cube is not aligned to grid nodes: {0}")]
    CubeNotAligned(String),

    #[error("cube exceeds grid bounds: {0}")]
    CubeOutOfBounds(String),

    #[error("grid smaller than the averaging cube on axis {axis}")]
    GridTooSmall { axis: usize },

    #[error("counts must be odd, got {0}x{1}")]
    EvenCounts(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough scan nodes on axis {axis}: need {needed}, have {have}")]
    TooFewNodes { axis: usize, needed: usize, have: usize },

    #[error("no local maxima found in the area scan")]
    NoLocalMaxima,

    #[error("center ({0:.4}, {1:.4}) lies outside the scan aperture")]
    CenterOutsideAperture(f64, f64),

    #[error("missing inputs: {0}")]
    MissingInputs(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
