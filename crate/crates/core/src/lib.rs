//! Tracking-by-detection with cheap crop localization between detector frames.
//!
//! The detector runs every `d + 1` frames. On the frames in between, each
//! live tracklet is re-found by a localizer working on a small crop around
//! its predicted box, which is much cheaper than a full-frame detection.
//! See [`lbt`] for the loop itself and [`harness`] for end-to-end runs.

pub mod association;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod lbt;
pub mod metrics;
pub mod motion;
pub mod perception;
pub mod rng;
pub mod simulator;
pub mod tracker;

use thiserror::Error;

/// Top-level failure with a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Input(io::IoError),
    #[error(transparent)]
    Output(io::IoError),
    #[error(transparent)]
    Lbt(#[from] lbt::LbtError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("{0}")]
    Runtime(String),
}

impl From<config::ConfigError> for Error {
    fn from(e: config::ConfigError) -> Self {
        Error::Config(e.to_string())
    }
}

impl Error {
    /// 2 for configuration problems, 3 for unreadable inputs, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_) => 3,
            _ => 4,
        }
    }
}
