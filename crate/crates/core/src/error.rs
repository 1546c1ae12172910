use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the stage that raises them. The CLI maps
/// [`Error::is_numeric`] failures to exit code 3 and everything else to 2.
#[derive(Debug, Error)]
pub enum Error {
    // volume core
    #[error("invalid geometry: {0}")]
    GeometryInvalid(String),
    #[error("invalid frame schedule: {0}")]
    ScheduleInvalid(String),
    #[error("volume data invalid: {0}")]
    VolumeInvalid(String),
    #[error("mask is empty")]
    EmptyMask,
    #[error("crop {crop:?} larger than source dims {dims:?}")]
    CropTooLarge { crop: [usize; 3], dims: [usize; 3] },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    // nifti io
    #[error("bad NIfTI magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated data: expected {expected} bytes of voxel data, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("4D image {0} has no frame-schedule sidecar")]
    MissingSchedule(PathBuf),
    #[error("malformed header: {0}")]
    HeaderInvalid(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // phantom
    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
    #[error("invalid input model: {0}")]
    InputModelInvalid(String),
    #[error("ODE step {step_s} s exceeds the 1 s limit")]
    StepTooCoarse { step_s: f64 },

    // registration
    #[error("insufficient overlap: {overlap} of {total} fixed voxels map inside the moving image")]
    InsufficientOverlap { overlap: usize, total: usize },
    #[error("invalid registration config: {0}")]
    ConfigInvalid(String),

    // blood input
    #[error("no ICA component within size bounds [{min}, {max}]; candidate sizes: {candidates:?}")]
    NoComponentInBounds {
        min: usize,
        max: usize,
        candidates: Vec<usize>,
    },
    #[error("input curve is identically zero")]
    AllZeroInput,
    #[error("not enough frames for the fit: {0}")]
    TooFewFrames(String),
    #[error("optimizer did not converge: {0}")]
    DidNotConverge(String),

    // parametric
    #[error("blood input vanishes at every retained frame")]
    InputVanishes,
    #[error("only {found} frames at or after t* = {t_star} min; need at least 3")]
    TooFewLateFrames { found: usize, t_star: f64 },
    #[error("injected dose must be positive, got {0}")]
    NonpositiveDose(f64),
    #[error("body weight must be positive, got {0}")]
    NonpositiveWeight(f64),
    #[error("no frame midpoint falls inside the window [{0}, {1}] min")]
    EmptyWindow(f64, f64),

    // tumor pipeline
    #[error("seed value {value} outside band [{low}, {high}]")]
    SeedOutOfRange { value: f64, low: f64, high: f64 },
    #[error("seed {0:?} outside volume bounds")]
    SeedOutOfBounds([usize; 3]),
    #[error("mask bounding box {bbox:?} not inside crop window {window:?}")]
    MaskOutsideCrop {
        bbox: [(usize, usize); 3],
        window: [(usize, usize); 3],
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical procedure rather than of its inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::DidNotConverge(_))
    }
}
