use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("matrix is not a rotation (orthonormality residual {residual:.3e})")]
    NotRotation { residual: f64 },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("requested {k} neighbours from a cloud of {n} points")]
    TooManyNeighbours { k: usize, n: usize },
    #[error("feature table has {rows} rows but cloud has {points} points")]
    FeatureShape { rows: usize, points: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene has no sampleable surface area")]
    DegenerateScene,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence has {got} frames, the model accepts at most {max}")]
    SequenceTooLong { got: usize, max: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    /// Carries the parameters from before the failing update.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::refiner::RefinerParams>,
    },
    #[error("signals cannot be synchronized: {0}")]
    Unsynchronizable(&'static str),
    #[error("singular calibration system (|f_h.z| = {0:.3e})")]
    SingularCalibration(f64),
    #[error("region pair {task_id} is infeasible after {attempts} attempts")]
    RegionInfeasible { task_id: u32, attempts: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("hash mismatch for {0}")]
    HashMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
