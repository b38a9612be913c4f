use thiserror::Error;

/// Errors produced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("baseline must be positive, got {0}")]
    BadBaseline(f64),
    #[error("cameras are not rectified: {0}")]
    NotRectified(String),
    #[error("pixel ({row}, {col}) outside {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("rays are parallel (|d1 x d2| = {0:e})")]
    ParallelRays(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("validity mask has no true pixels")]
    EmptyMask,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("degenerate schedule: {0}")]
    DegenerateSchedule(String),
    #[error("timestep {t} out of range for {num_steps}-step schedule")]
    BadTimestep { t: usize, num_steps: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("disparity maps have no jointly valid pixels")]
    NoJointValid,
    #[error("every calibration candidate fell below the joint-valid threshold")]
    AllCandidatesInvalid,
    #[error("bad resize target: {0}")]
    BadTarget(String),
    #[error("mix spec is empty")]
    EmptySpec,
    #[error("need at least two strictly increasing views: {0}")]
    TooFewViews(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCamera(_) => "InvalidCamera",
            Error::InvalidPose(_) => "InvalidPose",
            Error::BadBaseline(_) => "BadBaseline",
            Error::NotRectified(_) => "NotRectified",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::ParallelRays(_) => "ParallelRays",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::EmptyMask => "EmptyMask",
            Error::InvalidRange(_) => "InvalidRange",
            Error::DegenerateSchedule(_) => "DegenerateSchedule",
            Error::BadTimestep { .. } => "BadTimestep",
            Error::BadParams(_) => "BadParams",
            Error::NoJointValid => "NoJointValid",
            Error::AllCandidatesInvalid => "AllCandidatesInvalid",
            Error::BadTarget(_) => "BadTarget",
            Error::EmptySpec => "EmptySpec",
            Error::TooFewViews(_) => "TooFewViews",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
