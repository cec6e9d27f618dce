//! Runs the listings of the guide in `book/` as doc-tests. mdbook cannot
//! link against workspace crates, so each chapter is pulled in here instead.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/graph.md")]
pub mod graph {}
#[doc = include_str!("../../../book/src/temporal.md")]
pub mod temporal {}
#[doc = include_str!("../../../book/src/graph-attention.md")]
pub mod graph_attention {}
#[doc = include_str!("../../../book/src/latent.md")]
pub mod latent {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/backtest.md")]
pub mod backtest {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
