//! Optimal power flow and optimal transmission switching on transmission
//! networks.
//!
//! The crate builds DC, SOCP-relaxed AC and mixed-integer SOCP switching
//! models from a per-unit [`netmodel::Network`], solves them with an
//! interior-point conic backend plus a branch-and-bound driver, checks AC
//! feasibility with Newton–Raphson, and derives market metrics (LMP, FMP,
//! congestion rent).

pub mod acfeas;
pub mod cases;
pub mod caseio;
pub mod conic;
pub mod formulations;
pub mod metrics;
pub mod mibb;
pub mod netmodel;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("network has no slack bus")]
    NoSlack,
    #[error(transparent)]
    Case(#[from] caseio::CaseError),
    #[error(transparent)]
    Conic(#[from] conic::ConicError),
    #[error("model not solved: {0}")]
    NotSolved(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("switching islands the network: buses {0:?} are disconnected")]
    Islanded(Vec<usize>),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("missing dual: {0}")]
    MissingDual(String),
}
