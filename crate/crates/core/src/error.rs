use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM ({0})")]
    PgmFormat(String),

    #[error("PGM maxval {0} exceeds 65535")]
    MaxvalOverflow(u32),

    #[error("truncated frame data: expected {expected} bytes, found {found}")]
    TruncatedFrameData { expected: u64, found: u64 },

    #[error("frame dimensions {found:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("frame window [{ell}, {ell}+{m}) out of range for {frames} frames")]
    WindowOutOfRange { ell: usize, m: usize, frames: usize },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("region does not intersect the frame")]
    RegionOutsideFrame,

    #[error("rectangle {rect:?} does not fit a {width}x{height} frame")]
    RectOutOfBounds {
        rect: (usize, usize, usize, usize),
        width: usize,
        height: usize,
    },

    #[error("empty filtration domain")]
    EmptyDomain,

    #[error("cannot resolve infinite deaths: diagram has no finite pair")]
    NoFinitePair,

    #[error("oracle guard rail: {width}x{height} exceeds 32x32")]
    OracleGuardRail { width: usize, height: usize },

    #[error("statistic {0} is undefined on the observed output")]
    UndefinedStatistic(String),

    #[error("lifetime vector is empty")]
    EmptyLifetimes,

    #[error("all lifetimes are zero; entropy is undefined")]
    ZeroTotalLifetime,

    #[error("zero variance; {0} is undefined")]
    ZeroVariance(String),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("point sets have {left} and {right} points; a full matching needs equal sizes")]
    SizeMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
