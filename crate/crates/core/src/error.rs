use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EocError>;

#[derive(Debug, Error)]
pub enum EocError {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {name} = {value} ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// An integrand produced a non-finite value at a quadrature node.
    #[error("integrand is not finite at z = {node} (value {value})")]
    Evaluation { node: f64, value: f64 },

    /// The requested targets admit no valid initialization.
    #[error("infeasible target: {reason}")]
    Infeasible { reason: String, sb2: Option<f64> },

    /// A closed form that divides by 1 - V'(q*) was asked for at V'(q*) = 1.
    #[error("degenerate slope: V'(q*) = {0}")]
    DegenerateSlope(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl EocError {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        EocError::Domain {
            name,
            value,
            expected,
        }
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(EocError::domain(name, value, "must be finite and > 0"))
    }
}
