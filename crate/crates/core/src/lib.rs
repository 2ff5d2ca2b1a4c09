pub mod checkpoint;
pub mod data;
pub mod diagnostics;
pub mod doc;
pub mod error;
pub mod exec;
pub mod fsutil;
pub mod graph;
pub mod metrics;
pub mod msrrn;
pub mod mulcom;
pub mod numerics;
pub mod rng;
pub mod streams;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
