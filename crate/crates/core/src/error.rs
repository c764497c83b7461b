use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator, the learners and the run harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("engine speed {speed:.3} rad/s outside fuel map range [{min:.3}, {max:.3}]")]
    OutOfGrid { speed: f64, min: f64, max: f64 },

    #[error("collision with lead vehicle (gap {gap:.3} m)")]
    Collision { gap: f64 },

    #[error("time {time:.3} s is beyond the end of the drive cycle ({end:.3} s)")]
    CycleEnded { time: f64, end: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite gradient at layer {layer}, parameter {index}")]
    NonFiniteGradient { layer: usize, index: usize },

    #[error("replay buffer not ready: {windows} windows of length {len} stored")]
    NotReady { windows: usize, len: usize },

    #[error("empty trajectory segment")]
    EmptySegment,

    #[error("temperature dual failed: g({lo:e}) = {g_lo}, g({hi:e}) = {g_hi}")]
    DualFailure { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("learner diverged: {0}")]
    Diverged(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("zero distance travelled; fuel economy undefined")]
    ZeroDistance,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
