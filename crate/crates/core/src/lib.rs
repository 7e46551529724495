//! Hierarchical clustering of time-series on auto-encoded compact sequences.
//!
//! The crate is organised as a linear pipeline:
//!
//! - [`dataset`]: load UCR-style TSV or long-format CSV collections, merge
//!   train/test splits and z-normalise each series.
//! - [`autoencoder`]: a two-layer sequence-to-sequence LSTM autoencoder trained
//!   with minibatch SGD; its final encoder hidden state is the compact latent.
//! - [`distance`]: Chebyshev, Manhattan and Mahalanobis kernels plus
//!   pairwise distance matrices.
//! - [`cluster`]: average-linkage agglomerative clustering and flat cuts.
//! - [`selection`]: the modified Hubert statistic, best-measure selection and
//!   the Rand index / NMI external scores.
//! - [`pipeline`]: cached end-to-end runs plus the benchmark table.
//!
//! Data-parallel inner loops (distance rows, Hubert partial sums, per-series
//! gradients) use rayon when the `parallel` feature is enabled and run
//! serially otherwise. Both paths produce bitwise-identical results.

pub mod autoencoder;
pub mod cluster;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
pub use exec::Execution;
