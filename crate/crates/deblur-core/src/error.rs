use std::path::PathBuf;

/// Errors produced by the deblur toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed file format: {0}")]
    Format(String),

    #[error("image dimensions mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("zero-dimension image ({height}x{width})")]
    ZeroDimension { height: usize, width: usize },

    #[error("non-finite pixel value at index {index}")]
    NonFinitePixel { index: usize },

    #[error("crop rectangle ({top},{left})+{h}x{w} exceeds image bounds {height}x{width}")]
    CropOutOfBounds {
        top: usize,
        left: usize,
        h: usize,
        w: usize,
        height: usize,
        width: usize,
    },

    #[error("kernel side {side} does not fit a {height}x{width} grid")]
    KernelTooLarge {
        side: usize,
        height: usize,
        width: usize,
    },

    #[error("kernel side must be odd, got {0}")]
    KernelSideEven(usize),

    #[error("invalid distortion parameters: {0}")]
    InvalidDistortion(String),

    #[error(
        "ill-posed deconvolution: spectrum magnitude {min_mag:.3e} below 1e-12 with lambda = 0"
    )]
    IllPosed { min_mag: f64 },

    #[error("iterate became non-finite at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("estimation diverged at iteration {iteration} (loss non-finite)")]
    EstimationDiverged { iteration: usize, trace: Vec<f64> },

    #[error("dataset has no calibration pair")]
    MissingCalibration,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("image corpus is empty")]
    EmptyCorpus,

    #[error("no reconstruction pipeline registered for level {level}; known levels: {known:?}")]
    UnknownLevel { level: u32, known: Vec<u32> },

    #[error("external command failed with status {status}: {stderr}")]
    CommandFailed { status: i32, stderr: String },

    #[error("no OCR command configured")]
    MissingRecognizer,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
