//! Stock ranking with an attention-gated GRU temporal encoder, a correlation
//! graph attention encoder, learnable latent market states fused by
//! multi-head cross-attention, and a graph attention prediction head.
//!
//! The crate also ships the data pipeline ([`dataset`]), the correlation
//! graph builder ([`relgraph`]), a daily top-k backtester with the usual
//! risk metrics ([`backtest`]) and a planted-signal market generator
//! ([`synth`]) used by the acceptance tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agru;
pub mod backtest;
pub mod dataset;
pub mod error;
pub mod gat;
pub mod latent;
pub mod model;
pub mod numkernel;
pub mod pipeline;
pub mod relgraph;
pub mod synth;

pub use error::{Error, Result};
