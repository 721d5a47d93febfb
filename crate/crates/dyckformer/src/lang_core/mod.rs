//! Alphabets, token sequences, depth functions, exact membership and prefix
//! oracles, and the two parameterized generation processes.

mod alphabet;
mod oracle;
mod process;

pub use alphabet::{Alphabet, Token, TokenSequence};
pub use oracle::{
    depth, is_dyck_member, is_dyck_prefix, is_member, is_prefix, is_shuffle_member, is_shuffle_prefix, per_type_depth,
    valid_close_types, Scan, ScanStatus,
};
pub use process::{
    dyck_next_distribution, epsilon_n, epsilon_n_corrected, process_log_probability, sample_sequence,
    shuffle_next_distribution, DyckGenParams, GenParams, Sampled, ShuffleGenParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which bracket language an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Dyck,
    Shuffle,
}

/// Errors raised by `lang_core`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LangError {
    #[error("an alphabet needs at least one bracket type")]
    ZeroTypes,
    #[error("bracket type {t} is outside 1..={k}")]
    TypeOutOfRange { t: usize, k: usize },
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    IdOutOfRange { id: usize, vocab: usize },
    #[error("cannot parse token {0:?}")]
    BadTokenText(String),
    #[error("sequence is not a prefix of the language")]
    NotAPrefix,
    #[error("invalid process parameters: {0}")]
    BadParams(String),
}
