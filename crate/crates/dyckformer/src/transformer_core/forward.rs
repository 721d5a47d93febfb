use super::{AttentionWeights, AttnMode, FfnWeights, Head, ModelError, NormKind, QkNorm, TransformerModel};
use crate::lang_core::{Alphabet, TokenSequence};
use crate::tensor_ops::{dot, hardmax, layernorm, linear, relu, rms_layernorm, softmax};

/// Residual stream: one `d_model` vector per position.
pub type Representation = Vec<Vec<f64>>;

/// Column `i` is `W_emb · onehot(w_i)` plus the positional row if present.
pub fn embed(model: &TransformerModel, seq: &TokenSequence) -> Result<Representation, ModelError> {
    let alpha = Alphabet::new(model.k)?;
    if model.w_emb.cols() != alpha.vocab_size() {
        return Err(ModelError::Vocab { model: model.w_emb.cols(), k: model.k, needed: alpha.vocab_size() });
    }
    seq.iter()
        .enumerate()
        .map(|(i, &tok)| {
            let id = alpha.id_of(tok)?;
            let mut x: Vec<f64> = (0..model.d_model).map(|r| model.w_emb[(r, id)]).collect();
            if let Some(p) = &model.positional {
                if i >= p.cols() {
                    return Err(ModelError::Position { pos: i, len: p.cols() });
                }
                for (r, v) in x.iter_mut().enumerate() {
                    *v += p[(r, i)];
                }
            }
            Ok(x)
        })
        .collect()
}

fn normalize(kind: NormKind, y: &[f64], g: &[f64], b: &[f64]) -> Result<Vec<f64>, ModelError> {
    Ok(match kind {
        NormKind::Rms => rms_layernorm(y, g, b)?,
        NormKind::Layer => layernorm(y, g, b)?,
    })
}

/// Row-wise nonzero entries of a weight matrix in compressed-row form.
/// Applying it skips exact zeros only, so results match the dense product
/// bit for bit.
struct Sparse {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
    cols: usize,
}

impl Sparse {
    fn new(m: &crate::tensor_ops::Matrix) -> Self {
        let mut offsets = Vec::with_capacity(m.rows() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for r in 0..m.rows() {
            entries.extend(m.row(r).iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, &v)| (c, v)));
            offsets.push(entries.len());
        }
        Self { offsets, entries, cols: m.cols() }
    }

    fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[r]..self.offsets[r + 1]]
    }

    fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Indices of rows with at least one nonzero entry.
    fn live_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.offsets[r + 1] > self.offsets[r]).collect()
    }

    fn check(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.cols {
            return Err(crate::tensor_ops::TensorError::Dim { op: "linear", expected: self.cols, got: x.len() }.into());
        }
        Ok(())
    }

    fn dot_row(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).iter().map(|&(c, w)| w * x[c]).sum()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check(x)?;
        Ok((0..self.rows()).map(|r| self.dot_row(r, x)).collect())
    }

    /// The product restricted to `rows`.
    fn apply_rows(&self, rows: &[usize], x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check(x)?;
        Ok(rows.iter().map(|&r| self.dot_row(r, x)).collect())
    }
}

/// Query/key/value maps of one attention layer in sparse form.
struct AttnPlan<'a> {
    attn: &'a AttentionWeights,
    wq: Sparse,
    wk: Sparse,
    /// Query/key rows kept when there is no query/key normalization.
    qk_live: Vec<usize>,
    wv: Sparse,
    v_live: Vec<usize>,
}

impl<'a> AttnPlan<'a> {
    fn new(attn: &'a AttentionWeights) -> Self {
        let (wq, wk, wv) = (Sparse::new(&attn.wq), Sparse::new(&attn.wk), Sparse::new(&attn.wv));
        // Rows that vanish in either map contribute exact zeros to every score.
        let qk_live = wq.live_rows().into_iter().filter(|&r| !wk.row(r).is_empty()).collect();
        let v_live = wv.live_rows();
        Self { attn, wq, wk, qk_live, wv, v_live }
    }

    fn project_qk(&self, x: &Representation) -> Result<(Representation, Representation), ModelError> {
        if let Some(QkNorm { kind, gamma_q, beta_q, gamma_k, beta_k }) = &self.attn.qk_norm {
            let mut qs = Vec::with_capacity(x.len());
            let mut ks = Vec::with_capacity(x.len());
            for xi in x {
                qs.push(normalize(*kind, &self.wq.apply(xi)?, gamma_q, beta_q)?);
                ks.push(normalize(*kind, &self.wk.apply(xi)?, gamma_k, beta_k)?);
            }
            return Ok((qs, ks));
        }
        let qs = x.iter().map(|xi| self.wq.apply_rows(&self.qk_live, xi)).collect::<Result<_, _>>()?;
        let ks = x.iter().map(|xi| self.wk.apply_rows(&self.qk_live, xi)).collect::<Result<_, _>>()?;
        Ok((qs, ks))
    }

    fn scores(&self, x: &Representation) -> Result<Vec<Vec<f64>>, ModelError> {
        let (qs, ks) = self.project_qk(x)?;
        Ok(qs.iter().enumerate().map(|(i, q)| ks[..=i].iter().map(|k| dot(q, k)).collect()).collect())
    }

    fn forward(&self, x: &Representation) -> Result<Representation, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let scores = self.scores(x)?;
        let out_rows = &self.v_live;
        let vs: Representation = x.iter().map(|xi| self.wv.apply_rows(out_rows, xi)).collect::<Result<_, _>>()?;
        let mut out = x.clone();
        let mut acc = vec![0.0; out_rows.len()];
        for (i, row) in scores.iter().enumerate() {
            let w = match self.attn.mode {
                AttnMode::Softmax => softmax(row)?,
                AttnMode::Hardmax => hardmax(row)?,
            };
            for (v, &r) in acc.iter_mut().zip(out_rows) {
                *v = x[i][r];
            }
            for (j, &a) in w.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (hv, vv) in acc.iter_mut().zip(&vs[j]) {
                    *hv += a * vv;
                }
            }
            for (&r, &v) in out_rows.iter().zip(&acc) {
                out[i][r] = v;
            }
        }
        Ok(out)
    }
}

struct FfnPlan<'a> {
    ffn: &'a FfnWeights,
    w1: Sparse,
    w2: Sparse,
}

impl<'a> FfnPlan<'a> {
    fn new(ffn: &'a FfnWeights) -> Self {
        Self { ffn, w1: Sparse::new(&ffn.w1), w2: Sparse::new(&ffn.w2) }
    }

    fn forward(&self, x: &Representation) -> Result<Representation, ModelError> {
        x.iter()
            .map(|xi| {
                let y = self.w1.apply(xi)?;
                let n = relu(&normalize(self.ffn.norm, &y, &self.ffn.gamma, &self.ffn.beta)?);
                let upd = self.w2.apply(&n)?;
                Ok(xi.iter().zip(upd).map(|(a, b)| a + b).collect())
            })
            .collect()
    }
}

/// Causal score rows: entry `[i][j]` is `⟨q_i, k_j⟩` for `j ≤ i`.
pub fn attention_scores(attn: &AttentionWeights, x: &Representation) -> Result<Vec<Vec<f64>>, ModelError> {
    AttnPlan::new(attn).scores(x)
}

/// `h_i = x_i + Σ_{j≤i} α_ij W_V x_j`.
pub fn attention_forward(attn: &AttentionWeights, x: &Representation) -> Result<Representation, ModelError> {
    AttnPlan::new(attn).forward(x)
}

/// `x ↦ x + W₂ [Norm(W₁ x)]₊`, applied per position.
pub fn ffn_forward(ffn: &FfnWeights, x: &Representation) -> Result<Representation, ModelError> {
    FfnPlan::new(ffn).forward(x)
}

/// A model with its weight matrices preprocessed once for many forward
/// passes. It borrows the model, so the weights cannot change under it.
pub struct CompiledModel<'a> {
    model: &'a TransformerModel,
    blocks: Vec<(AttnPlan<'a>, FfnPlan<'a>)>,
}

impl<'a> CompiledModel<'a> {
    pub fn new(model: &'a TransformerModel) -> Self {
        let blocks = model.blocks.iter().map(|b| (AttnPlan::new(&b.attention), FfnPlan::new(&b.ffn))).collect();
        Self { model, blocks }
    }

    pub fn model(&self) -> &'a TransformerModel {
        self.model
    }

    /// Final representations after every block.
    pub fn forward(&self, seq: &TokenSequence) -> Result<Representation, ModelError> {
        let mut x = embed(self.model, seq)?;
        if x.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        for (a, f) in &self.blocks {
            x = a.forward(&x)?;
            x = f.forward(&x)?;
        }
        Ok(x)
    }

    /// The embedding followed by the stream after each attention and each
    /// FFN (so `1 + 2·blocks` entries).
    pub fn trace(&self, seq: &TokenSequence) -> Result<Vec<Representation>, ModelError> {
        let mut x = embed(self.model, seq)?;
        if x.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut out = vec![x.clone()];
        for (a, f) in &self.blocks {
            x = a.forward(&x)?;
            out.push(x.clone());
            x = f.forward(&x)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Sign of `w·x_n + b` at the last position (`+1` iff the margin is
    /// positive) together with the raw margin.
    pub fn recognize(&self, head: &Head, seq: &TokenSequence) -> Result<(i8, f64), ModelError> {
        let Head::Recognizer { w, b } = head else {
            return Err(ModelError::WrongHead { expected: "recognizer" });
        };
        self.model.validate_head(head)?;
        let x = self.forward(seq)?;
        let margin = dot(w, x.last().expect("non-empty")) + b;
        Ok((if margin > 0.0 { 1 } else { -1 }, margin))
    }

    /// Next-token distributions for every prefix `seq[..=i]` from one causal pass.
    pub fn next_token_distributions(&self, head: &Head, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, ModelError> {
        let Head::Generator { w, b } = head else {
            return Err(ModelError::WrongHead { expected: "generator" });
        };
        self.model.validate_head(head)?;
        let x = self.forward(seq)?;
        x.iter().map(|xi| gen_dist(w, b, xi)).collect()
    }
}

/// Final representations after every block.
pub fn model_forward(model: &TransformerModel, seq: &TokenSequence) -> Result<Representation, ModelError> {
    CompiledModel::new(model).forward(seq)
}

/// The embedding followed by the stream after each attention and each FFN
/// (so `1 + 2·blocks` entries).
pub fn model_trace(model: &TransformerModel, seq: &TokenSequence) -> Result<Vec<Representation>, ModelError> {
    CompiledModel::new(model).trace(seq)
}

/// Sign of `w·x_n + b` at the last position (`+1` iff the margin is positive)
/// together with the raw margin.
pub fn recognize(model: &TransformerModel, head: &Head, seq: &TokenSequence) -> Result<(i8, f64), ModelError> {
    CompiledModel::new(model).recognize(head, seq)
}

fn gen_dist(w: &crate::tensor_ops::Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>, ModelError> {
    let logits: Vec<f64> = linear(w, x)?.iter().zip(b).map(|(l, c)| l + c).collect();
    Ok(softmax(&logits)?)
}

/// `softmax(W x_n + b)` at the last position.
pub fn next_token_distribution(
    model: &TransformerModel,
    head: &Head,
    seq: &TokenSequence,
) -> Result<Vec<f64>, ModelError> {
    let Head::Generator { w, b } = head else {
        return Err(ModelError::WrongHead { expected: "generator" });
    };
    model.validate_head(head)?;
    let x = model_forward(model, seq)?;
    gen_dist(w, b, x.last().expect("non-empty"))
}

/// Next-token distributions for every prefix `seq[..=i]` from one causal pass.
pub fn next_token_distributions(
    model: &TransformerModel,
    head: &Head,
    seq: &TokenSequence,
) -> Result<Vec<Vec<f64>>, ModelError> {
    CompiledModel::new(model).next_token_distributions(head, seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_ops::Matrix;
    use crate::transformer_core::{Block, FfnWeights};

    #[test]
    fn zero_blocks_are_identity() {
        let mut w_emb = Matrix::zeros(3, 4);
        for c in 0..4 {
            w_emb[(c % 3, c)] = (c + 1) as f64;
        }
        let model = TransformerModel {
            k: 1,
            d_model: 3,
            w_emb,
            positional: None,
            blocks: vec![Block { attention: AttentionWeights::null(3), ffn: FfnWeights::null(3) }],
        };
        let seq: TokenSequence = "BOS O1 C1 EOS".parse().unwrap();
        assert_eq!(model_forward(&model, &seq).unwrap(), embed(&model, &seq).unwrap());
    }
}
