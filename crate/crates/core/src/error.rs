use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite")]
    NonFinite,
    #[error("box size must be positive, got {w} x {h}")]
    NonPositiveSize { w: f64, h: f64 },
    #[error("track {track_id}: frame {frame} does not follow frame {previous}")]
    NonIncreasingFrame {
        track_id: u32,
        frame: u32,
        previous: u32,
    },
    #[error("s-value {value} at frame {frame} outside [0, 1]")]
    SValueOutOfRange { frame: u32, value: f64 },
    #[error("non-swimming frame {frame} has s-value {value}, expected 0.5")]
    NonNeutralIdle { frame: u32, value: f64 },
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("innovation covariance is singular")]
    SingularMatrix,
    #[error("invalid kalman configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    InvalidMatrix { row: usize, col: usize },
    #[error("cost matrix rows have inconsistent lengths")]
    Ragged,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame {frame} is not after previous frame {previous}")]
    OutOfOrderFrame { frame: u32, previous: u32 },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrokeError {
    #[error("signal has {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("no frame is flagged as swimming")]
    EmptySwimmingRegion,
    #[error("need at least two peaks, got {0}")]
    InsufficientPeaks(usize),
    #[error("length mismatch: {0} values vs {1} flags")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("peak list is empty")]
    EmptyPeaks,
    #[error("s-value sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("lane {lane}: duplicate annotation for frame {frame}")]
    DuplicateFrame { lane: i32, frame: u32 },
    #[error("hypothesis frames {hyp_first}..={hyp_last} fall outside ground truth frames {gt_first}..={gt_last}")]
    FrameRangeMismatch {
        gt_first: u32,
        gt_last: u32,
        hyp_first: u32,
        hyp_last: u32,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Union of every stage error, for callers composing the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Stroke(#[from] StrokeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
