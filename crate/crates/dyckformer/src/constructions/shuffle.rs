//! Shuffle-Dyck recognizer (four blocks) and generator (one block).

use std::collections::BTreeMap;

use super::blocks::{angle_ffn, bos_counting_attn, embedding, mode_for, recognizer_head, Role};
use super::dyck_rec::DyckBase;
use super::layout::{AttnBuilder, FfnBuilder, Layout};
use super::select::theta;
use super::{code_width, BuiltNetwork, ConstructError, ConstructionMeta, ConstructionParams, Task};
use crate::lang_core::{GenParams, ShuffleGenParams, Token};
use crate::tensor_ops::Matrix;
use crate::transformer_core::{AttentionWeights, Block, FfnWeights, Head, TransformerModel};

/// Accepts iff the final depth is zero and no per-type running depth is
/// ever negative. The statistic `[sin θ(d)]₊ + mean_j [−sin θ(d_j | t_j)]₊`
/// accumulates in one channel and the head subtracts it from a small `ε`.
pub fn build_shuffle_recognizer(k: usize, params: &ConstructionParams) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    let m = code_width(k);
    let a = params.a;
    let mut lay = Layout::new();
    let base = DyckBase::alloc(&mut lay, m);
    let (a1, b1, cphi, sphi) = (lay.ch("l1.a"), lay.ch("l1.b"), lay.ch("cos_phi"), lay.ch("sin_phi"));
    let (a2, b2, stat) = (lay.ch("l2.a"), lay.ch("l2.b"), lay.ch("stat"));
    let (a3, b3, neg) = (lay.ch("l3.a"), lay.ch("l3.b"), lay.ch("neg_type_depth"));
    let d = lay.used();
    let (cst, s, o) = (base.cst, base.s, base.o);
    let count = mode_for(params.attn, Role::Counting);
    let g = (1.0 / d as f64).sqrt();

    let l1 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a1, vec![(s, 1.0)]), (b1, vec![(cst, 1.0), (s, -1.0)])], count),
        ffn: angle_ffn(d, a1, b1, cphi, sphi),
    };

    let mut f2 = FfnBuilder::new(d, d);
    f2.row(&[(a2, 1.0)], g, 0.0);
    let r = f2.row(&[(b2, 1.0)], g, 0.0);
    f2.out(r, stat, 1.0);
    let l2 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a2, vec![(s, 1.0)]), (b2, vec![(o, 1.0)])], count),
        ffn: f2.finish(),
    };

    let c3 = params.c_shuffle;
    let mut at3 = AttnBuilder::new(d);
    for (l, &t) in base.t.iter().enumerate() {
        at3.wq[(l, t)] = c3;
        at3.wk[(l, t)] = 1.0;
    }
    at3.wq[(m, cst)] = c3 * m as f64 + a;
    at3.wk[(m, s)] = 1.0;
    at3.value(a3, &[(s, 1.0)]).value(b3, &[(o, 1.0)]);
    let mut f3 = FfnBuilder::new(d, d);
    f3.row(&[(a3, 1.0)], g, 0.0);
    let r = f3.row(&[(b3, -1.0)], g, 0.0);
    f3.out(r, neg, 1.0);
    let l3 = Block { attention: at3.finish(count), ffn: f3.finish() };

    let l4 = Block {
        attention: bos_counting_attn(d, cst, s, 0.0, &[(stat, vec![(neg, 1.0)])], count),
        ffn: FfnWeights::null(d),
    };

    let model =
        TransformerModel { k, d_model: d, w_emb: base.embedding(k, d), positional: None, blocks: vec![l1, l2, l3, l4] };
    model.validate()?;
    let eps = theta(1.0, a).sin() / (2.0 * (params.n_max as f64 + 2.0));
    let head = recognizer_head(d, stat, eps);
    let mut derived = BTreeMap::new();
    derived.insert("head_eps".into(), eps);
    Ok(BuiltNetwork {
        task: Task::ShuffleRec,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "shuffle-recognizer-4-block".into(),
            channels: lay.into_map(),
            selection: vec![],
            gen: None,
            derived,
        },
    })
}

/// Masking constant of the Shuffle-Dyck generator head for target TV `eps`:
/// `max(ln(2(k+1)/ε), ln(((1−q)/q + 1 + (1−r)/r)/ε))`.
pub fn shuffle_gen_constant(k: usize, gp: &ShuffleGenParams, eps: f64) -> f64 {
    let a = (2.0 * (k as f64 + 1.0) / eps).ln();
    let b = (((1.0 - gp.q) / gp.q + 1.0 + (1.0 - gp.r) / gp.r) / eps).ln();
    a.max(b)
}

/// One-hot signed type embedding, a uniform-average block computing the
/// per-type depth ratios, and an FFN turning them into `𝕀[d(w|t) ≤ 0]`.
pub fn build_shuffle_generator(
    k: usize,
    gen_params: &ShuffleGenParams,
    params: &ConstructionParams,
) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    if gen_params.k() != k {
        return Err(ConstructError::Params(format!("generation params have {} types, expected {k}", gen_params.k())));
    }
    let mut lay = Layout::new();
    let t = lay.block("t_onehot", k);
    let mean = lay.block("mean", k);
    let ind = lay.block("zero_indicator", k);
    let d = lay.used();
    let w_emb = embedding(k, d, |tok| match tok {
        Token::Open(ty) => vec![(t[ty - 1], 1.0)],
        Token::Close(ty) => vec![(t[ty - 1], -1.0)],
        Token::Bos | Token::Eos => vec![],
    });
    let mut at = AttnBuilder::new(d);
    for l in 0..k {
        at.value(mean[l], &[(t[l], 1.0)]);
    }
    let attention: AttentionWeights = at.finish(mode_for(params.attn, Role::Counting));

    let eps = 1.0 / (2.0 * (params.n_max as f64 + 1.0));
    let g = 1.0 / (eps * (d as f64).sqrt());
    let mut f = FfnBuilder::new(d, d);
    for l in 0..k {
        let r = f.row(&[(mean[l], -1.0)], g, 0.0);
        f.out(r, ind[l], -1.0);
    }
    for l in 0..k {
        let r = f.row(&[(mean[l], -1.0)], g, 1.0);
        f.out(r, ind[l], 1.0);
    }
    for &tl in &t {
        f.row(&[(tl, 1.0)], g, 0.0);
    }
    let model =
        TransformerModel { k, d_model: d, w_emb, positional: None, blocks: vec![Block { attention, ffn: f.finish() }] };
    model.validate()?;

    let c = shuffle_gen_constant(k, gen_params, 1e-3);
    let vocab = 2 * k + 2;
    let mut w = Matrix::zeros(vocab, d);
    let mut b = vec![0.0; vocab];
    let (q, r) = (gen_params.q, gen_params.r);
    for l in 0..k {
        b[l] = gen_params.pi[l].ln();
        b[k + l] = ((1.0 - q) * gen_params.pibar[l] / q).ln();
        w[(k + l, ind[l])] = -c;
        w[(2 * k + 1, ind[l])] = c;
    }
    b[2 * k] = -c;
    b[2 * k + 1] = ((1.0 - r) / r).ln() - c * k as f64;
    let head = Head::Generator { w, b };
    model.validate_head(&head)?;
    let mut derived = BTreeMap::new();
    derived.insert("c_gen".into(), c);
    derived.insert("indicator_eps".into(), eps);
    Ok(BuiltNetwork {
        task: Task::ShuffleGen,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "shuffle-generator-1-block".into(),
            channels: lay.into_map(),
            selection: vec![],
            gen: Some(GenParams::Shuffle(gen_params.clone())),
            derived,
        },
    })
}
