use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("eye is outside the camera frustum ({0})")]
    OutOfFrustum(String),

    #[error("photodiode window lies fully outside the frame: no useful information")]
    NoUsefulInformation,

    #[error("rank-deficient least-squares design along the {dimension} dimension")]
    RankDeficient { dimension: &'static str },

    #[error("calibration is not monotone over the eye domain at sensor position {sensor_mm} mm")]
    NonMonotone { sensor_mm: f64 },

    #[error("calibration curve is constant in eye position; cannot invert")]
    Unsolvable,

    #[error("all sweep points are degenerate (|pupil displacement| < {min_px} px) on the {axis} axis")]
    DegenerateSweep { axis: &'static str, min_px: f64 },

    #[error("gain model is ill-formed: {0}")]
    BadGains(String),

    #[error("no scan-table block covers the query point")]
    OutsideTable,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.display().to_string(), message: err.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
