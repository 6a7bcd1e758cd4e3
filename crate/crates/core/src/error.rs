use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a precondition (non-finite value, out-of-range
    /// parameter, mismatched lengths, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A calibration stage failed (zero mean count rate, non-positive
    /// segment dither amplitude, ...).
    #[error("calibration error: {0}")]
    Calibration(String),

    /// The simulated feedback loop diverged or a scenario is unrunnable.
    #[error("simulation error: {0}")]
    Simulation(String),

    /// Malformed file contents (bad magic, missing column, parse failure).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }

    pub fn simulation(msg: impl Into<String>) -> Self {
        Error::Simulation(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
