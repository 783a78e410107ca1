use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },

    #[error("need >= 2 channels, got {0}")]
    TooFewChannels(usize),

    #[error("channel length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("unsupported sample rate {got} Hz (expected {expected} Hz)")]
    SampleRate { got: u32, expected: u32 },

    #[error("signal has {samples} samples, shorter than one {frame}-sample frame")]
    TooShort { samples: usize, frame: usize },

    #[error("too few frames for PSD estimation: {frames} available, {needed} needed")]
    TooFewFrames { frames: usize, needed: usize },

    #[error("no reliable DP-RTF features")]
    NoFeatures,

    #[error("steering response is zero at direction {direction_deg} deg, bin {bin}")]
    ZeroResponse { direction_deg: f64, bin: usize },

    #[error("steering table has no entry for bin {0}")]
    MissingBin(usize),

    #[error("candidate grids disagree on the direction list")]
    GridMismatch,

    #[error("observation row {0} has no positive likelihood")]
    DegenerateRow(usize),

    #[error("infeasible weights: row {0} has non-positive mixture likelihood")]
    Infeasible(usize),

    #[error("singular KKT system")]
    SingularKkt,

    #[error("line search stalled at iteration {iteration}")]
    StalledLineSearch { iteration: usize },

    #[error(
        "interior-point solver hit {iterations} iterations (gap {gap:e}, dual residual {dual:e})"
    )]
    MaxIterations {
        iterations: usize,
        gap: f64,
        dual: f64,
        best: Vec<f64>,
    },

    #[error("CCP iteration {iteration}: {source}")]
    Ccp {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible scene: {0}")]
    Scene(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
