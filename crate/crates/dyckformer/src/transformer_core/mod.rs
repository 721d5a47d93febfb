//! The block architecture: token embedding, single-head causal attention with
//! a residual connection, an FFN that normalizes after its first linear map,
//! and recognizer or generator heads.

mod forward;
mod model;

pub use forward::{
    attention_forward, attention_scores, embed, ffn_forward, model_forward, model_trace, next_token_distribution,
    next_token_distributions, recognize, CompiledModel, Representation,
};
pub use model::{AttentionWeights, AttnMode, Block, FfnWeights, Head, NormKind, QkNorm, TransformerModel};

use thiserror::Error;

use crate::lang_core::LangError;
use crate::tensor_ops::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("model vocabulary is {model} tokens but k = {k} needs {needed}")]
    Vocab { model: usize, k: usize, needed: usize },
    #[error("expected a {expected} head")]
    WrongHead { expected: &'static str },
    #[error("position {pos} exceeds the positional table of {len} entries")]
    Position { pos: usize, len: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("shape error in {what}: {detail}")]
    Shape { what: String, detail: String },
}
