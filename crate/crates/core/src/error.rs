use thiserror::Error;

/// Errors raised by tree construction, the hedging engine and the oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant violation at node {node}: {check}")]
    Invariant { node: usize, check: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("mode '{mode}' cannot be used on a tree with {num_assets} assets")]
    ModeMismatch { mode: String, num_assets: usize },

    #[error("non-finite value while computing {what} at node {node}")]
    NonFinite { node: usize, what: &'static str },

    #[error("inputs do not belong to the same tree: {0}")]
    Mismatch(String),

    #[error("invalid random horizon: {0}")]
    Horizon(String),

    #[error("random time is not a stopping time: event {{tau = {time}}} splits the subtree of node {node}")]
    NotStoppingTime { node: usize, time: usize },

    #[error("oracle has {unknowns} unknowns, cap is {cap}")]
    CapExceeded { unknowns: usize, cap: usize },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
