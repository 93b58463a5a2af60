use std::fmt;

use thiserror::Error;

/// A single scenario validation failure, located by document path
/// (e.g. `units[1].params.p_min`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Which clearing run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Base,
    Reference,
    Restricted,
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunKind::Base => "base",
            RunKind::Reference => "reference",
            RunKind::Restricted => "restricted",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed linear program: {0}")]
    MalformedLp(String),
    #[error("simplex iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("invalid scenario: {}", join(.0))]
    InvalidScenario(Vec<Violation>),
    #[error("network is disconnected; unreachable from the reference node: {}", .unreachable.join(", "))]
    Disconnected { unreachable: Vec<String> },
    #[error("{run} clearing is infeasible: {detail}")]
    Infeasible { run: RunKind, detail: String },
    #[error("{run} clearing is unbounded")]
    Unbounded { run: RunKind },
    #[error("offer does not match the firm's units: {0}")]
    OfferMismatch(String),
    #[error("claimed parameters for unit {unit} leave the true envelope")]
    OutsideTrueEnvelope { unit: String },
    #[error("schedule outside the claimed envelope: {0}")]
    OutsideClaimedEnvelope(String),
    #[error("invalid distortion: {0}")]
    InvalidDistortion(String),
    #[error("uplift cannot be allocated: total cleared consumption is zero")]
    ZeroConsumption,
}

pub type Result<T> = std::result::Result<T, Error>;
