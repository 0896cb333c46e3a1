//! Three-stage causal filter for lead-lag discovery.
//!
//! 1. [`granger`]: nested-OLS F-test per ordered pair, scanned over lookback
//!    orders to pick the order with the lowest mean p-value.
//! 2. [`pcmci`]: partial correlations of the lagged driver against the target
//!    given the remaining series, thresholded into an acyclic graph.
//! 3. [`entropy`]: plug-in transfer entropy with a shuffled-surrogate
//!    baseline; edges whose effective TE is significant become final pairs.

use thiserror::Error;

pub mod entropy;
pub mod granger;
pub mod ols;
pub mod pcmci;

pub use entropy::{effective_transfer_entropy, select_final_pairs, transfer_entropy, EteResult, FinalPair, TeConfig};
pub use granger::{granger_scan, granger_test, GrangerResult, GrangerScan};
pub use ols::{ols_fit, OlsFit};
pub use pcmci::{partial_correlation, pcmci_graph, CausalEdge, CausalGraph, EdgeVerdict, PcmciConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("design has {rows} rows for {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("design is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("series lengths differ ({left} vs {right})")]
    Misaligned { left: usize, right: usize },
    #[error("lag order {lag} needs {need} usable observations, have {have}")]
    InsufficientSample { lag: usize, need: usize, have: usize },
    #[error("need at least {need} observations, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("residuals have zero variance (series fully explained by the conditioning set)")]
    ZeroVariance,
    #[error("bin count must be at least 2, got {0}")]
    TooFewBins(usize),
    #[error("history length must be positive")]
    ZeroHistory,
    #[error("state space of {bins}^{dims} cells is too large")]
    StateSpace { bins: usize, dims: usize },
    #[error("need at least {min} shuffles, got {got}")]
    TooFewShuffles { min: usize, got: usize },
    #[error("lag order must be positive")]
    ZeroLag,
    #[error("unknown ticker `{0}`")]
    UnknownTicker(String),
}
