//! Hand-built Transformers for bracket languages.
//!
//! The crate compiles exact weights for Transformers that recognize and
//! generate `Dyck_k` and `Shuffle-Dyck_k`, runs them with an f64 reference
//! implementation of the architecture, and checks them against brute-force
//! oracles.
//!
//! * [`lang_core`]: alphabets, oracles and generation processes.
//! * [`tensor_ops`]: dense kernels and normalizations.
//! * [`transformer_core`]: the block architecture and heads.
//! * [`constructions`]: weight compilers and constant selection.
//! * [`conversions`]: RMS-to-LN FFN rewriting and query/key normalization rewrites.
//! * [`evalkit`]: datasets and metrics.
//! * [`io`]: weight, dataset and metrics files.

pub mod constructions;
pub mod conversions;
pub mod evalkit;
pub mod exec;
pub mod io;
pub mod lang_core;
pub mod tensor_ops;
pub mod transformer_core;

pub use exec::Exec;
