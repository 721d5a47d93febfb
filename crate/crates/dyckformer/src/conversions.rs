//! Weight-level equivalences between normalization variants.
//!
//! * [`rmsln_ffn_to_ln_ffn`]: an RMS-normalized FFN becomes a standard
//!   layer-normalized FFN of twice the hidden width.
//! * [`qkln_to_qkrmsln`] / [`qkrmsln_to_qkln`]: attention with layer-normalized
//!   queries and keys and attention with RMS-normalized ones produce identical
//!   scores after these rewrites.
//! * [`qk_fixed_norm_wrap`]: a selection layer compiled from a
//!   [`ScoreSpec`] gains complementary query/key rows so that every query and
//!   key has constant norm, which lets an RMS normalization with fixed `γ`
//!   leave the scores unchanged.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::constructions::{BuiltNetwork, Feature, ScoreSpec};
use crate::tensor_ops::Matrix;
use crate::transformer_core::{AttentionWeights, Block, FfnWeights, NormKind, QkNorm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversionError {
    #[error("expected {expected:?} normalization, found {found:?}")]
    Variant { expected: NormKind, found: Option<NormKind> },
    #[error("no score decomposition recorded for this layer")]
    UnknownChannelMap,
    #[error("score decomposition does not reproduce the layer's query/key maps")]
    SpecMismatch,
    #[error("block {0} does not exist")]
    NoSuchBlock(usize),
}

/// `W₁′ = [W₁; −W₁]`, `W₂′ = [W₂ 0]`, `β′ = (β; 0)`, `γ′ = (γ; 1)` under
/// standard layer normalization.
pub fn rmsln_ffn_to_ln_ffn(ffn: &FfnWeights) -> Result<FfnWeights, ConversionError> {
    if ffn.norm != NormKind::Rms {
        return Err(ConversionError::Variant { expected: NormKind::Rms, found: Some(ffn.norm) });
    }
    let h = ffn.hidden();
    let w1 = Matrix::vstack(&[&ffn.w1, &ffn.w1.scale(-1.0)]).expect("same width");
    let w2 = Matrix::hstack(&[&ffn.w2, &Matrix::zeros(ffn.w2.rows(), h)]).expect("same height");
    let mut gamma = ffn.gamma.clone();
    gamma.extend(std::iter::repeat_n(1.0, h));
    let mut beta = ffn.beta.clone();
    beta.extend(std::iter::repeat_n(0.0, h));
    Ok(FfnWeights { norm: NormKind::Layer, w1, w2, gamma, beta })
}

fn qk_kind(attn: &AttentionWeights) -> Option<NormKind> {
    attn.qk_norm.as_ref().map(|n| n.kind)
}

fn center_rows(w: &Matrix) -> Matrix {
    let (r, c) = w.shape();
    let mut out = w.clone();
    for col in 0..c {
        let mean = (0..r).map(|i| w[(i, col)]).sum::<f64>() / r as f64;
        for i in 0..r {
            out[(i, col)] -= mean;
        }
    }
    out
}

/// Subtracts the mean over rows from `W_Q` and `W_K`, so the projected
/// vectors are already centered and RMS normalization equals layer
/// normalization.
pub fn qkln_to_qkrmsln(attn: &AttentionWeights) -> Result<AttentionWeights, ConversionError> {
    let Some(n) = attn.qk_norm.as_ref().filter(|n| n.kind == NormKind::Layer) else {
        return Err(ConversionError::Variant { expected: NormKind::Layer, found: qk_kind(attn) });
    };
    Ok(AttentionWeights {
        mode: attn.mode,
        wq: center_rows(&attn.wq),
        wk: center_rows(&attn.wk),
        wv: attn.wv.clone(),
        qk_norm: Some(QkNorm { kind: NormKind::Rms, ..n.clone() }),
    })
}

/// Triples the query/key dimension:
/// `W_Q″ = [W_Q; −W_Q; 0]`, `W_K″ = [W_K; 0; −W_K]`,
/// `γ_Q″ = √(2/3)(γ; γ; 1)`, `β_Q″ = (β; −β; 0)`,
/// `γ_K″ = √(2/3)(γ; 1; γ)`, `β_K″ = (β; 0; −β)`.
pub fn qkrmsln_to_qkln(attn: &AttentionWeights) -> Result<AttentionWeights, ConversionError> {
    let Some(n) = attn.qk_norm.as_ref().filter(|n| n.kind == NormKind::Rms) else {
        return Err(ConversionError::Variant { expected: NormKind::Rms, found: qk_kind(attn) });
    };
    let z = Matrix::zeros(attn.wq.rows(), attn.wq.cols());
    let wq = Matrix::vstack(&[&attn.wq, &attn.wq.scale(-1.0), &z]).expect("same width");
    let wk = Matrix::vstack(&[&attn.wk, &z, &attn.wk.scale(-1.0)]).expect("same width");
    let s = (2.0f64 / 3.0).sqrt();
    let ones = vec![1.0; attn.wq.rows()];
    let zeros = vec![0.0; attn.wq.rows()];
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let cat = |parts: [&[f64]; 3], scale: f64| parts.concat().into_iter().map(|x| x * scale).collect::<Vec<_>>();
    Ok(AttentionWeights {
        mode: attn.mode,
        wq,
        wk,
        wv: attn.wv.clone(),
        qk_norm: Some(QkNorm {
            kind: NormKind::Layer,
            gamma_q: cat([&n.gamma_q, &n.gamma_q, &ones], s),
            beta_q: cat([&n.beta_q, &neg(&n.beta_q), &zeros], 1.0),
            gamma_k: cat([&n.gamma_k, &ones, &n.gamma_k], s),
            beta_k: cat([&n.beta_k, &zeros, &neg(&n.beta_k)], 1.0),
        }),
    })
}

struct Side {
    rows: Vec<(Feature, f64)>,
}

impl Side {
    /// Complement rows (feature, weight) and the resulting constant norm²,
    /// or `None` when the side contains a free feature.
    fn complete(&self) -> Option<(Vec<(Feature, f64)>, f64)> {
        if self.rows.iter().any(|(f, _)| matches!(f, Feature::Free { .. })) {
            return None;
        }
        let mut fams: BTreeMap<(usize, usize), (f64, f64, Feature)> = BTreeMap::new();
        let mut norm2 = 0.0;
        for (f, w) in &self.rows {
            match f.family() {
                Some(key) => {
                    let first = matches!(f, Feature::Cos { .. } | Feature::Open { .. });
                    let e = fams.entry(key).or_insert((0.0, 0.0, f.clone()));
                    if first {
                        e.0 += w * w;
                    } else {
                        e.1 += w * w;
                    }
                    e.2 = f.clone();
                }
                None => norm2 += w * w,
            }
        }
        let mut extra = Vec::new();
        for (_, (w0, w1, f)) in fams {
            norm2 += w0.max(w1);
            if w0 != w1 {
                let first = matches!(f, Feature::Cos { .. } | Feature::Open { .. });
                let heavy_is_first = w0 > w1;
                let heavy = if first == heavy_is_first { f.clone() } else { f.complement().expect("paired") };
                extra.push((heavy.complement().expect("paired"), (w0 - w1).abs().sqrt()));
            }
        }
        Some((extra, norm2))
    }
}

/// Rewrites a selection layer so that queries and keys pass through an RMS
/// normalization with constant `γ = ‖·‖/√d_qk` (or unit normalization on a
/// side with free features) while the scores stay those of `spec`.
pub fn qk_fixed_norm_wrap(
    attn: &AttentionWeights,
    spec: Option<&ScoreSpec>,
) -> Result<AttentionWeights, ConversionError> {
    let spec = spec.ok_or(ConversionError::UnknownChannelMap)?;
    let d = attn.wq.cols();
    let (wq0, wk0) = spec.compile(d);
    if wq0.padded(attn.wq.rows().max(wq0.rows()), d).max_abs_diff(&attn.wq.padded(attn.wq.rows().max(wq0.rows()), d))
        > 0.0
        || wk0
            .padded(attn.wk.rows().max(wk0.rows()), d)
            .max_abs_diff(&attn.wk.padded(attn.wk.rows().max(wk0.rows()), d))
            > 0.0
    {
        return Err(ConversionError::SpecMismatch);
    }
    let q = Side { rows: spec.terms.iter().map(|t| (t.q.clone(), t.coef)).collect() };
    let k = Side { rows: spec.terms.iter().map(|t| (t.k.clone(), 1.0)).collect() };
    let qc = q.complete();
    let kc = k.complete();
    let nq_extra = qc.as_ref().map_or(0, |c| c.0.len());
    let nk_extra = kc.as_ref().map_or(0, |c| c.0.len());
    let n = spec.terms.len();
    let dqk = n + nq_extra + nk_extra;
    let mut wq = Matrix::zeros(dqk, d);
    let mut wk = Matrix::zeros(dqk, d);
    for (r, t) in spec.terms.iter().enumerate() {
        for (c, w) in t.q.lin() {
            wq[(r, c)] += t.coef * w;
        }
        for (c, w) in t.k.lin() {
            wk[(r, c)] += w;
        }
    }
    let mut r = n;
    if let Some((extra, _)) = &qc {
        for (f, w) in extra {
            for (c, v) in f.lin() {
                wq[(r, c)] += w * v;
            }
            r += 1;
        }
    }
    if let Some((extra, _)) = &kc {
        for (f, w) in extra {
            for (c, v) in f.lin() {
                wk[(r, c)] += w * v;
            }
            r += 1;
        }
    }
    let sq = (dqk as f64).sqrt();
    let gamma = |c: &Option<(Vec<(Feature, f64)>, f64)>| match c {
        Some((_, norm2)) => vec![norm2.sqrt() / sq; dqk],
        None => vec![1.0 / sq; dqk],
    };
    Ok(AttentionWeights {
        mode: attn.mode,
        wq,
        wk,
        wv: attn.wv.clone(),
        qk_norm: Some(QkNorm {
            kind: NormKind::Rms,
            gamma_q: gamma(&qc),
            beta_q: vec![0.0; dqk],
            gamma_k: gamma(&kc),
            beta_k: vec![0.0; dqk],
        }),
    })
}

/// Applies [`qk_fixed_norm_wrap`] to every recorded selection layer.
pub fn wrap_selection_layers(net: &BuiltNetwork) -> Result<BuiltNetwork, ConversionError> {
    let mut out = net.clone();
    for sel in &net.meta.selection {
        let block = out.model.blocks.get_mut(sel.block).ok_or(ConversionError::NoSuchBlock(sel.block))?;
        block.attention = qk_fixed_norm_wrap(&block.attention, Some(&sel.spec))?;
    }
    Ok(out)
}

/// Converts every FFN of a network to the layer-normalized form.
pub fn ln_ffn_network(net: &BuiltNetwork) -> Result<BuiltNetwork, ConversionError> {
    let mut out = net.clone();
    out.model.blocks = net
        .model
        .blocks
        .iter()
        .map(|b| Ok(Block { attention: b.attention.clone(), ffn: rmsln_ffn_to_ln_ffn(&b.ffn)? }))
        .collect::<Result<_, ConversionError>>()?;
    Ok(out)
}
