use thiserror::Error;

use crate::fock::ModeId;

/// Errors raised by the simulator and its analysis passes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Domain(String),

    #[error("mode {0} is not part of the registry")]
    UnknownMode(ModeId),

    #[error("states or maps refer to different mode registries")]
    RegistryMismatch,

    #[error("linear map is not an isometry (max deviation {0:.3e})")]
    NotIsometric(f64),

    #[error("malformed gate binding: {0}")]
    Binding(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("photon number mismatch: {0} in, {1} out")]
    PhotonMismatch(usize, usize),

    #[error("unsupported gate kind for this pass: {0}")]
    Unsupported(String),

    #[error("malformed circuit description: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
