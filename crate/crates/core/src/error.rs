// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("scenario has no affected streams")]
    NoAffectedStreams,

    #[error("replication count must be positive")]
    ZeroReplications,

    #[error(
        "no threshold bracket found: a reached {a_reached:.4} with ARL {arl_hat:.1} < gamma {gamma} \
         ({censored_fraction:.3} of replications censored)"
    )]
    BracketNotFound {
        a_reached: f64,
        arl_hat: f64,
        gamma: f64,
        censored_fraction: f64,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
