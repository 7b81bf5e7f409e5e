use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("invalid model: {}", join_diagnostics(.0))]
    InvalidModel(Vec<Diagnostic>),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inertia matrix is not positive definite at q = {q:?}")]
    SingularInertia { q: Vec<f64> },

    #[error("non-finite state at t = {t}: q = {q:?}, qd = {qd:?}")]
    NonFinite { t: f64, q: Vec<f64>, qd: Vec<f64> },

    #[error("transversality violated: P2[{joint}] = {value} must be > 0")]
    Transversality { joint: usize, value: f64 },

    #[error("inverse kinematics failed at sample {sample} (pose error {error:.3e})")]
    IkFailed { sample: usize, error: f64 },

    #[error("time {t} outside trajectory range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("objective returned non-finite values for every particle")]
    AllNonFinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}
