use std::path::PathBuf;

use thiserror::Error;

use crate::conflicts::{AgentId, Conflict, Time};

/// Misuse of an API precondition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("agent {0} is already registered")]
    AlreadyRegistered(AgentId),
    #[error("agent {0} is not registered")]
    UnknownAgent(AgentId),
    #[error("conflict list is empty")]
    NoConflicts,
    #[error("missing delta cost for counterpart {0}")]
    MissingDelta(AgentId),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("executed moves collide at t={time}: {conflict:?}")]
    Collision { time: Time, conflict: Conflict },
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidValue {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

/// Failures of the centralized solvers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("no conflict-free solution within the horizon")]
    NoSolution,
    #[error("search stopped after {0} expansions")]
    ExpansionLimit(usize),
    #[error("instance too large for brute force: {0}")]
    GuardViolation(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

/// Problems reading a trace file.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed trace: {0}")]
    Malformed(String),
}
