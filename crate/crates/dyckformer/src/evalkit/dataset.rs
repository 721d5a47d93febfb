use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::exec::Exec;
use crate::lang_core::{sample_sequence, GenParams, Lang, Token, TokenSequence};

/// Length cutoff between in-distribution and out-of-distribution data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_max: usize,
    pub ood_factor: f64,
}

impl SplitSpec {
    pub fn new(n_max: usize, ood_factor: f64) -> Result<Self, EvalError> {
        if !(ood_factor > 1.0) {
            return Err(EvalError::OodFactor(ood_factor));
        }
        Ok(Self { n_max, ood_factor })
    }

    /// Longest body kept in a test-style set.
    pub fn ood_cap(&self) -> usize {
        (self.ood_factor * self.n_max as f64).floor() as usize
    }

    /// Bucket of a prefix holding `brackets` brackets.
    pub fn bucket(&self, brackets: usize) -> Split {
        if brackets <= self.n_max {
            Split::Id
        } else {
            Split::Ood
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Id,
    Ood,
}

/// Train-style sets are truncated at `n_max`; test-style sets run to
/// `ood_factor · n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Train,
    Test,
}

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: usize,
    pub lang: Lang,
    pub k: usize,
    /// Bucket of the full sequence by bracket count.
    pub split: Split,
    /// `true` when the length cap stopped sampling before `EOS`.
    pub truncated: bool,
    pub tokens: TokenSequence,
}

impl DatasetRecord {
    pub fn brackets(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_bracket()).count()
    }

    /// Tokens between `BOS` and `EOS` (or the end).
    pub fn body(&self) -> Vec<Token> {
        self.tokens.iter().copied().filter(|t| t.is_bracket()).collect()
    }
}

/// Per-record seed derived from the dataset seed (SplitMix64 step), so
/// records can be sampled in any order.
pub fn split_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `count` sequences from the process, deterministically in `seed`.
pub fn generate_dataset(
    params: &GenParams,
    count: usize,
    split: SplitSpec,
    kind: DatasetKind,
    seed: u64,
    exec: Exec,
) -> Vec<DatasetRecord> {
    let cap = match kind {
        DatasetKind::Train => split.n_max,
        DatasetKind::Test => split.ood_cap(),
    };
    exec.map_range(count, |i| {
        let s = sample_sequence(params, split_seed(seed, i), cap);
        let brackets = s.tokens.iter().filter(|t| t.is_bracket()).count();
        DatasetRecord {
            id: i,
            lang: params.lang(),
            k: params.k(),
            split: split.bucket(brackets),
            truncated: s.truncated,
            tokens: s.tokens,
        }
    })
}
