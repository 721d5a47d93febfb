use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensor_ops::Matrix;

/// How attention scores become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnMode {
    Softmax,
    Hardmax,
}

/// Normalization flavour used inside an FFN or on query/key vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Rms,
    Layer,
}

/// Per-vector normalization applied to queries and keys before the dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkNorm {
    pub kind: NormKind,
    pub gamma_q: Vec<f64>,
    pub beta_q: Vec<f64>,
    pub gamma_k: Vec<f64>,
    pub beta_k: Vec<f64>,
}

/// Single-head causal attention. `wq` and `wk` are `d_qk × d_model`; `wv` is
/// `d_model × d_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub mode: AttnMode,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qk_norm: Option<QkNorm>,
}

impl AttentionWeights {
    /// All-zero attention: uniform weights and a zero update.
    pub fn null(d: usize) -> Self {
        Self {
            mode: AttnMode::Softmax,
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            qk_norm: None,
        }
    }

    pub fn d_qk(&self) -> usize {
        self.wq.rows()
    }
}

/// `x ↦ x + W₂ [Norm(W₁ x)]₊` with `W₁: h × d`, `W₂: d × h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnWeights {
    pub norm: NormKind,
    pub w1: Matrix,
    pub w2: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FfnWeights {
    /// Zero FFN of hidden width `d`.
    pub fn null(d: usize) -> Self {
        Self {
            norm: NormKind::Rms,
            w1: Matrix::zeros(d, d),
            w2: Matrix::zeros(d, d),
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub attention: AttentionWeights,
    pub ffn: FfnWeights,
}

/// Task head read off the last position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Head {
    /// Accept iff `w·x + b > 0`.
    Recognizer { w: Vec<f64>, b: f64 },
    /// Next-token logits `W x + b`, `W: K × d`.
    Generator { w: Matrix, b: Vec<f64> },
}

/// Embedding, optional learned positional table, and blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    pub k: usize,
    pub d_model: usize,
    /// `d_model × K` embedding matrix; column `id` embeds token `id`.
    pub w_emb: Matrix,
    /// `d_model × P` table added to position `i` (never set by constructions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positional: Option<Matrix>,
    pub blocks: Vec<Block>,
}

fn shape_err(what: impl Into<String>, detail: impl Into<String>) -> ModelError {
    ModelError::Shape { what: what.into(), detail: detail.into() }
}

impl TransformerModel {
    pub fn vocab(&self) -> usize {
        2 * self.k + 2
    }

    /// Checks every dimension against `d_model` and the vocabulary.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.d_model;
        if self.w_emb.shape() != (d, self.vocab()) {
            return Err(ModelError::Vocab { model: self.w_emb.cols(), k: self.k, needed: self.vocab() });
        }
        if self.w_emb.rows() != d {
            return Err(shape_err("w_emb", format!("{} rows for d_model {d}", self.w_emb.rows())));
        }
        if let Some(p) = &self.positional {
            if p.rows() != d {
                return Err(shape_err("positional", format!("{} rows for d_model {d}", p.rows())));
            }
        }
        for (l, b) in self.blocks.iter().enumerate() {
            let a = &b.attention;
            let dqk = a.wq.rows();
            if a.wq.cols() != d || a.wk.shape() != (dqk, d) || a.wv.shape() != (d, d) {
                return Err(shape_err(format!("block {l} attention"), "wq/wk/wv shape mismatch"));
            }
            if let Some(n) = &a.qk_norm {
                if [&n.gamma_q, &n.beta_q, &n.gamma_k, &n.beta_k].iter().any(|v| v.len() != dqk) {
                    return Err(shape_err(format!("block {l} qk_norm"), "vector length ≠ d_qk"));
                }
            }
            let f = &b.ffn;
            let h = f.w1.rows();
            if f.w1.cols() != d || f.w2.shape() != (d, h) || f.gamma.len() != h || f.beta.len() != h {
                return Err(shape_err(format!("block {l} ffn"), "w1/w2/gamma/beta shape mismatch"));
            }
        }
        Ok(())
    }

    pub fn validate_head(&self, head: &Head) -> Result<(), ModelError> {
        match head {
            Head::Recognizer { w, .. } if w.len() != self.d_model => {
                Err(shape_err("recognizer head", format!("w has {} entries", w.len())))
            }
            Head::Generator { w, b } if w.shape() != (self.vocab(), self.d_model) || b.len() != self.vocab() => {
                Err(shape_err("generator head", format!("W is {:?}, b has {}", w.shape(), b.len())))
            }
            _ => Ok(()),
        }
    }
}
