//! Bracket alphabets, tokens and token sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LangError;

/// A bracket alphabet with `k` pair types plus the two special tokens.
///
/// Token ids follow a fixed bijection onto `[0, 2k + 2)`: `open_1..open_k`,
/// then `close_1..close_k`, then `BOS`, then `EOS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    k: usize,
}

impl Alphabet {
    /// Creates an alphabet with `k ≥ 1` bracket types.
    pub fn new(k: usize) -> Result<Self, LangError> {
        if k == 0 {
            return Err(LangError::ZeroTypes);
        }
        Ok(Self { k })
    }

    /// Number of bracket types.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Vocabulary size `K = 2k + 2`.
    pub fn vocab_size(&self) -> usize {
        2 * self.k + 2
    }

    /// Id of `BOS`.
    pub fn bos_id(&self) -> usize {
        2 * self.k
    }

    /// Id of `EOS`.
    pub fn eos_id(&self) -> usize {
        2 * self.k + 1
    }

    /// Maps a token to its id, checking the type range.
    pub fn id_of(&self, tok: Token) -> Result<usize, LangError> {
        self.check(tok)?;
        Ok(match tok {
            Token::Open(t) => t - 1,
            Token::Close(t) => self.k + t - 1,
            Token::Bos => self.bos_id(),
            Token::Eos => self.eos_id(),
        })
    }

    /// Inverse of [`Alphabet::id_of`].
    pub fn token_of(&self, id: usize) -> Result<Token, LangError> {
        let k = self.k;
        match id {
            i if i < k => Ok(Token::Open(i + 1)),
            i if i < 2 * k => Ok(Token::Close(i - k + 1)),
            i if i == 2 * k => Ok(Token::Bos),
            i if i == 2 * k + 1 => Ok(Token::Eos),
            _ => Err(LangError::IdOutOfRange { id, vocab: self.vocab_size() }),
        }
    }

    /// Fails when a bracket token names a type outside `1..=k`.
    pub fn check(&self, tok: Token) -> Result<(), LangError> {
        match tok {
            Token::Open(t) | Token::Close(t) if t == 0 || t > self.k => Err(LangError::TypeOutOfRange { t, k: self.k }),
            _ => Ok(()),
        }
    }

    /// Checks every token of a sequence.
    pub fn check_seq(&self, seq: &TokenSequence) -> Result<(), LangError> {
        seq.iter().try_for_each(|&t| self.check(t))
    }

    /// All tokens in id order.
    pub fn tokens(&self) -> Vec<Token> {
        (0..self.vocab_size()).map(|i| self.token_of(i).expect("in range")).collect()
    }

    /// The `2k` bracket tokens in id order.
    pub fn brackets(&self) -> Vec<Token> {
        (0..2 * self.k).map(|i| self.token_of(i).expect("in range")).collect()
    }
}

/// One symbol of the alphabet. Bracket types are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    /// Opening bracket of type `t`.
    Open(usize),
    /// Closing bracket of type `t`.
    Close(usize),
    /// Start-of-sequence marker.
    Bos,
    /// End-of-sequence marker.
    Eos,
}

impl Token {
    /// Bracket type, or `None` for `BOS`/`EOS`.
    pub fn bracket_type(self) -> Option<usize> {
        match self {
            Token::Open(t) | Token::Close(t) => Some(t),
            _ => None,
        }
    }

    /// `+1` for opens, `-1` for closes, `0` otherwise.
    pub fn openness(self) -> i64 {
        match self {
            Token::Open(_) => 1,
            Token::Close(_) => -1,
            _ => 0,
        }
    }

    pub fn is_bracket(self) -> bool {
        matches!(self, Token::Open(_) | Token::Close(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Open(t) => write!(f, "O{t}"),
            Token::Close(t) => write!(f, "C{t}"),
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
        }
    }
}

impl FromStr for Token {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LangError::BadTokenText(s.to_string());
        match s {
            "BOS" => Ok(Token::Bos),
            "EOS" => Ok(Token::Eos),
            _ if s.len() >= 2 => {
                let t: usize = s[1..].parse().map_err(|_| bad())?;
                if t == 0 {
                    return Err(bad());
                }
                match &s[..1] {
                    "O" => Ok(Token::Open(t)),
                    "C" => Ok(Token::Close(t)),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An ordered list of tokens. Invalid strings are ordinary values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<Token>);

impl TokenSequence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self(tokens)
    }

    /// `BOS` followed by `body`.
    pub fn with_bos(body: &[Token]) -> Self {
        let mut v = Vec::with_capacity(body.len() + 1);
        v.push(Token::Bos);
        v.extend_from_slice(body);
        Self(v)
    }

    /// `BOS · body · EOS`.
    pub fn framed(body: &[Token]) -> Self {
        let mut s = Self::with_bos(body);
        s.0.push(Token::Eos);
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.0.iter()
    }

    pub fn push(&mut self, t: Token) {
        self.0.push(t);
    }

    /// The first `n` tokens as a new sequence.
    pub fn prefix(&self, n: usize) -> TokenSequence {
        TokenSequence(self.0[..n].to_vec())
    }

    /// Space-separated ASCII rendering such as `BOS O1 C1 EOS`.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
    }
}

impl FromStr for TokenSequence {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split_whitespace().map(str::parse).collect::<Result<Vec<_>, _>>().map(TokenSequence)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl From<Vec<Token>> for TokenSequence {
    fn from(v: Vec<Token>) -> Self {
        Self(v)
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
