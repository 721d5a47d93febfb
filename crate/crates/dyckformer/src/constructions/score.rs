//! Bilinear score decompositions of selection layers.
//!
//! A selection layer's score `⟨W_Q x_i, W_K x_j⟩` is written as a sum of terms
//! `coef · f(x_i) · g(x_j)` where `f`, `g` are single features of the
//! residual stream. Compiling a [`ScoreSpec`] gives one query/key row per term.
//! The features carry enough structure (which channels form a unit-norm pair)
//! for the fixed-norm wrap to add complementary rows.

use serde::{Deserialize, Serialize};

use crate::tensor_ops::Matrix;

/// A scalar feature of a residual vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Feature {
    /// The constant-one channel.
    Const { ch: usize },
    /// Cosine half of a unit-norm `(cos, sin)` pair stored at `(ch, partner)`.
    Cos { ch: usize, partner: usize },
    /// Sine half of a unit-norm pair stored at `(partner, ch)`.
    Sin { ch: usize, partner: usize },
    /// Openness `o ∈ {−1, 0, 1}`, paired with the start flag `s` (`o² + s² = 1`
    /// on brackets and BOS).
    Open { ch: usize, partner: usize },
    /// Start flag `s ∈ {0, 1}`, paired with openness.
    Start { ch: usize, partner: usize },
    /// Any linear combination, with no norm structure.
    Free { lin: Vec<(usize, f64)> },
}

impl Feature {
    /// `(channel, coefficient)` pairs of the linear functional.
    pub fn lin(&self) -> Vec<(usize, f64)> {
        match self {
            Feature::Const { ch }
            | Feature::Cos { ch, .. }
            | Feature::Sin { ch, .. }
            | Feature::Open { ch, .. }
            | Feature::Start { ch, .. } => vec![(*ch, 1.0)],
            Feature::Free { lin } => lin.clone(),
        }
    }

    /// The partner feature whose square completes a constant norm.
    pub fn complement(&self) -> Option<Feature> {
        Some(match *self {
            Feature::Cos { ch, partner } => Feature::Sin { ch: partner, partner: ch },
            Feature::Sin { ch, partner } => Feature::Cos { ch: partner, partner: ch },
            Feature::Open { ch, partner } => Feature::Start { ch: partner, partner: ch },
            Feature::Start { ch, partner } => Feature::Open { ch: partner, partner: ch },
            _ => return None,
        })
    }

    /// Identifies the unit-norm pair a feature belongs to.
    pub(crate) fn family(&self) -> Option<(usize, usize)> {
        match *self {
            Feature::Cos { ch, partner }
            | Feature::Sin { ch, partner }
            | Feature::Open { ch, partner }
            | Feature::Start { ch, partner } => Some((ch.min(partner), ch.max(partner))),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerm {
    pub q: Feature,
    pub k: Feature,
    pub coef: f64,
}

/// Score of a selection layer as `Σ coef · q(x_i) · k(x_j)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub terms: Vec<ScoreTerm>,
}

impl ScoreSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, q: Feature, k: Feature, coef: f64) -> Self {
        self.terms.push(ScoreTerm { q, k, coef });
        self
    }

    /// Query and key matrices with one row per term, padded with zero rows to
    /// at least `d` rows.
    pub fn compile(&self, d: usize) -> (Matrix, Matrix) {
        let rows = self.terms.len().max(d);
        let mut wq = Matrix::zeros(rows, d);
        let mut wk = Matrix::zeros(rows, d);
        for (r, t) in self.terms.iter().enumerate() {
            for (c, w) in t.q.lin() {
                wq[(r, c)] += t.coef * w;
            }
            for (c, w) in t.k.lin() {
                wk[(r, c)] += w;
            }
        }
        (wq, wk)
    }

    /// Evaluates the score directly from two residual vectors.
    pub fn eval(&self, xq: &[f64], xk: &[f64]) -> f64 {
        let f = |feat: &Feature, x: &[f64]| feat.lin().iter().map(|&(c, w)| w * x[c]).sum::<f64>();
        self.terms.iter().map(|t| t.coef * f(&t.q, xq) * f(&t.k, xk)).sum()
    }
}
