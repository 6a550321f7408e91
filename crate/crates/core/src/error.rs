// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced by the protocol, the accountant and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A bound was requested outside the hypotheses it is proven under.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    /// Client updates arrived out of order or with inconsistent parameters.
    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("malformed report (h={h}, t={t}, u={u}): {reason}")]
    MalformedReport { h: u32, t: usize, u: i8, reason: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
