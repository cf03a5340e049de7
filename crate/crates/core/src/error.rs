use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("vehicle {vehicle}: non-uniform time step at t={t} (gap {gap}, expected {expected})")]
    NonUniformStep {
        vehicle: String,
        t: f64,
        gap: f64,
        expected: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cyclic leader links: {}", .0.join(" -> "))]
    CyclicLeaders(Vec<String>),

    #[error("gap {gap} m is not positive; model is undefined")]
    NonPositiveGap { gap: f64 },

    #[error("collision between leader {leader} and follower {follower} at step {step} (gap {gap} m)")]
    Collision {
        leader: String,
        follower: String,
        step: usize,
        gap: f64,
    },

    #[error("lead trajectory covers {available} s but the horizon needs {required} s")]
    LeadTooShort { available: f64, required: f64 },

    #[error("closed-form error propagation requires dt = 1, got {0}")]
    UnsupportedTimeStep(f64),

    #[error("budget below population minimum ({budget} < {minimum})")]
    BudgetTooSmall { budget: usize, minimum: usize },

    #[error("every probed parameter vector was infeasible (collisions); revise the parameter bounds")]
    AllInfeasible,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    /// True for failures of the numerics (collisions, infeasible searches)
    /// rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveGap { .. }
                | Error::Collision { .. }
                | Error::AllInfeasible
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
