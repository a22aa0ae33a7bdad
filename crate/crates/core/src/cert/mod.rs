//! Lipschitz certificates for slope-restricted feed-forward networks.

mod certify;
mod empirical;
mod lmi;
mod multiplier;
mod refute;

pub use certify::{
    certify, certify_with, lipsdp_program, trivial_bound, CertMethod, CertifyMode, CertifyOptions, LipschitzCertificate,
};
pub use empirical::{empirical_lower_bound, Sampler};
pub use lmi::{build_f, build_m, build_p, incremental_form};
pub use multiplier::{CoupledMultiplier, DiagonalMultiplier};
pub use refute::{refute_coupled, relu_lemma_with_diagonal, CoupledExample, RefutationReport};

use thiserror::Error;

use crate::nn::NnError;
use crate::sdp::{SdpError, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("sector lower slope {0} is not supported (must be 0)")]
    UnsupportedSector(f64),
    #[error("invalid multiplier: {0}")]
    Multiplier(String),
    #[error("no finite bound is certifiable with this multiplier")]
    Infeasible,
    #[error("solver finished with status {0}")]
    Solver(SolveStatus),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("unknown example `{0}` (expected cosine-lmi or relu-lemma)")]
    UnknownExample(String),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}
