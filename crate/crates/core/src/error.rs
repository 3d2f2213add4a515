use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("infeasible optimization: {0}")]
    Infeasible(String),

    #[error("divergence undefined: group {group} has data mass {u} but zero query mass")]
    UnboundedDivergence { group: usize, u: f64 },

    #[error("malformed structure file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that mean the budget cannot host a valid plan.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
