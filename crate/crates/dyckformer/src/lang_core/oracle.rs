//! Stack and counter oracles.
//!
//! Framing rules shared by every predicate here: a sequence must start with
//! `BOS`, may contain no further `BOS`, and may contain `EOS` only as its last
//! token. A prefix may end in `EOS` only when the language's end condition
//! holds, at which point it is also a member. Malformed framing yields `false`.

use super::{Alphabet, Lang, LangError, Token, TokenSequence};

/// `#open − #close` over all tokens, ignoring type.
pub fn depth(seq: &TokenSequence) -> i64 {
    seq.iter().map(|t| t.openness()).sum()
}

/// Depth restricted to brackets of type `t`.
pub fn per_type_depth(alpha: &Alphabet, seq: &TokenSequence, t: usize) -> Result<i64, LangError> {
    if t == 0 || t > alpha.k() {
        return Err(LangError::TypeOutOfRange { t, k: alpha.k() });
    }
    Ok(seq.iter().filter(|tok| tok.bracket_type() == Some(t)).map(|tok| tok.openness()).sum())
}

/// Where an incremental scan stands after consuming some tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStatus {
    /// Nothing consumed yet.
    Empty,
    /// A valid proper prefix (no `EOS` yet).
    Open,
    /// A complete member, terminated by `EOS`.
    Complete,
    /// The consumed tokens are not a prefix; further input cannot repair it.
    Dead,
}

/// Incremental recognizer for either language.
///
/// Dyck mode keeps a stack of open types; shuffle mode keeps one counter per
/// type. Each `push` is O(1) amortized, so walking every prefix of a sequence
/// costs O(n) overall.
#[derive(Debug, Clone)]
pub struct Scan {
    lang: Lang,
    k: usize,
    stack: Vec<usize>,
    counters: Vec<i64>,
    status: ScanStatus,
}

impl Scan {
    pub fn new(lang: Lang, k: usize) -> Self {
        Self { lang, k, stack: Vec::new(), counters: vec![0; k], status: ScanStatus::Empty }
    }

    pub fn status(&self) -> ScanStatus {
        self.status
    }

    /// `true` when the tokens consumed so far form a prefix (possibly complete).
    pub fn is_prefix(&self) -> bool {
        matches!(self.status, ScanStatus::Open | ScanStatus::Complete)
    }

    /// Current bracket depth (valid while the scan is alive).
    pub fn depth(&self) -> i64 {
        self.counters.iter().sum()
    }

    /// Per-type counters, indexed by `t − 1`.
    pub fn counters(&self) -> &[i64] {
        &self.counters
    }

    /// Type on top of the Dyck stack.
    pub fn top(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    fn balanced(&self) -> bool {
        self.counters.iter().all(|&c| c == 0)
    }

    /// Consumes one token and returns the new status.
    pub fn push(&mut self, tok: Token) -> ScanStatus {
        use ScanStatus::*;
        let next = match (self.status, tok) {
            (Dead, _) | (Complete, _) => Dead,
            (Empty, Token::Bos) => Open,
            (Empty, _) => Dead,
            (Open, Token::Bos) => Dead,
            (Open, Token::Eos) => {
                if self.balanced() {
                    Complete
                } else {
                    Dead
                }
            }
            (Open, Token::Open(t)) | (Open, Token::Close(t)) if t == 0 || t > self.k => Dead,
            (Open, Token::Open(t)) => {
                self.counters[t - 1] += 1;
                self.stack.push(t);
                Open
            }
            (Open, Token::Close(t)) => match self.lang {
                Lang::Dyck => {
                    if self.stack.last() == Some(&t) {
                        self.stack.pop();
                        self.counters[t - 1] -= 1;
                        Open
                    } else {
                        Dead
                    }
                }
                Lang::Shuffle => {
                    if self.counters[t - 1] > 0 {
                        self.counters[t - 1] -= 1;
                        Open
                    } else {
                        Dead
                    }
                }
            },
        };
        self.status = next;
        next
    }

    /// Scans a whole sequence.
    pub fn run(lang: Lang, k: usize, seq: &TokenSequence) -> Self {
        let mut s = Self::new(lang, k);
        for &t in seq {
            if s.push(t) == ScanStatus::Dead {
                break;
            }
        }
        s
    }

    /// Types `t` for which `close_t` keeps the prefix alive.
    pub fn valid_closers(&self) -> Vec<usize> {
        if self.status != ScanStatus::Open {
            return Vec::new();
        }
        match self.lang {
            Lang::Dyck => self.top().into_iter().collect(),
            Lang::Shuffle => (1..=self.k).filter(|&t| self.counters[t - 1] > 0).collect(),
        }
    }
}

fn max_type(seq: &TokenSequence) -> usize {
    seq.iter().filter_map(|t| t.bracket_type()).max().unwrap_or(1)
}

/// Prefix test for the given language; `k` is inferred from the tokens.
pub fn is_prefix(lang: Lang, seq: &TokenSequence) -> bool {
    Scan::run(lang, max_type(seq), seq).is_prefix()
}

/// Membership test for the given language.
pub fn is_member(lang: Lang, seq: &TokenSequence) -> bool {
    Scan::run(lang, max_type(seq), seq).status() == ScanStatus::Complete
}

pub fn is_dyck_prefix(seq: &TokenSequence) -> bool {
    is_prefix(Lang::Dyck, seq)
}

pub fn is_dyck_member(seq: &TokenSequence) -> bool {
    is_member(Lang::Dyck, seq)
}

pub fn is_shuffle_prefix(seq: &TokenSequence) -> bool {
    is_prefix(Lang::Shuffle, seq)
}

pub fn is_shuffle_member(seq: &TokenSequence) -> bool {
    is_member(Lang::Shuffle, seq)
}

/// Closing types that keep `seq` a prefix.
///
/// Dyck mode returns the stack top (or nothing at depth 0); shuffle mode
/// returns every type with a positive counter. Fails on non-prefixes.
pub fn valid_close_types(alpha: &Alphabet, lang: Lang, seq: &TokenSequence) -> Result<Vec<usize>, LangError> {
    alpha.check_seq(seq)?;
    let s = Scan::run(lang, alpha.k(), seq);
    if !s.is_prefix() {
        return Err(LangError::NotAPrefix);
    }
    Ok(s.valid_closers())
}
