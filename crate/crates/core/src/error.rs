use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MvsdeError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite value in {what}")]
    NonFiniteInput { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{reason}; nearest admissible step sizes are h_I = {suggested_h_i}, h_II = {suggested_h_ii}")]
    Schedule {
        reason: String,
        suggested_h_i: f64,
        suggested_h_ii: f64,
    },

    #[error("non-finite state produced at t = {t}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    NonFiniteState { step: Option<usize>, t: f64 },

    #[error("amplitude-estimation input {value} outside [0, 1] at step {step} (clip bounds [{lower}, {upper}])")]
    QmciInput {
        step: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("time {t} outside [0, {end}]")]
    OutOfDomain { t: f64, end: f64 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

impl MvsdeError {
    /// True for failures that happen while a simulation is running, as
    /// opposed to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::NonFiniteState { .. } | Self::QmciInput { .. })
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MvsdeError>;
