//! Dyck recognizer and generator for inputs without a BOS token.
//!
//! Both start with the pseudo-BOS block, whose flag `ŝ` replaces the BOS
//! start channel in every counting layer. The recognizer then shifts the
//! stream by one position so that position `p` carries token `p − 1` and
//! position 0 acts as a virtual BOS; from there it runs the same fetch and
//! violation blocks as the BOS recognizer. The generator needs no shift.

use std::collections::BTreeMap;

use super::blocks::{
    angle_ffn, binary_code, bos_counting_attn, embedding, fetch_spec, mode_for, qsign_ffn, qsign_ffn_recov,
    recognizer_head, selection_attn, signed_angle_ffn, violation_block, FetchChannels, QSignChannels, Role,
    ViolationChannels,
};
use super::dyck_gen::{dyck_gen_head, indicator_ffn, Indicators};
use super::dyck_rec::q_at_bos;
use super::layout::{FfnBuilder, Layout};
use super::pseudo_bos::{pseudo_bos_eps, pseudo_bos_layers};
use super::score::{Feature, ScoreSpec};
use super::select::theta;
use super::{
    code_width, AttnPolicy, BuiltNetwork, ConstructError, ConstructionMeta, ConstructionParams, SelectionLayer, Task,
};
use crate::lang_core::{DyckGenParams, GenParams, Token, TokenSequence};
use crate::tensor_ops::Matrix;
use crate::transformer_core::{AttentionWeights, Block, FfnWeights, TransformerModel};

/// Whether the first two tokens differ (vacuously true for length < 2).
pub fn first_two_distinct(seq: &TokenSequence) -> bool {
    let t = seq.tokens();
    t.len() < 2 || t[0] != t[1]
}

/// Embedding `(t, o, e, 1)` with `e = √(m+1)` on EOS, so every bracket and
/// EOS has squared norm `m + 1` on `(t, o, e)`.
struct NobosBase {
    t: Vec<usize>,
    o: usize,
    e: usize,
    cst: usize,
}

impl NobosBase {
    fn alloc(lay: &mut Layout, m: usize) -> Self {
        Self { t: lay.block("t", m), o: lay.ch("o"), e: lay.ch("e"), cst: lay.ch("const") }
    }

    fn subspace(&self) -> Vec<usize> {
        let mut v = self.t.clone();
        v.push(self.o);
        v.push(self.e);
        v
    }

    fn embedding(&self, k: usize, d: usize) -> Matrix {
        let m = self.t.len();
        embedding(k, d, |tok| {
            let mut col = vec![(self.cst, 1.0)];
            match tok {
                Token::Open(t) | Token::Close(t) => {
                    col.extend(self.t.iter().copied().zip(binary_code(t, m)));
                    col.push((self.o, tok.openness() as f64));
                }
                Token::Eos => col.push((self.e, ((m + 1) as f64).sqrt())),
                Token::Bos => {}
            }
            col
        })
    }
}

fn pseudo_bos_block(
    d: usize,
    base: &NobosBase,
    mean: &[usize],
    shat: usize,
    n_max: usize,
    mode: crate::transformer_core::AttnMode,
) -> (Block, f64) {
    let m = base.t.len();
    let eps = pseudo_bos_eps(n_max + 1, (m + 1) as f64, 4.0);
    let (attention, ffn) = pseudo_bos_layers(d, &base.subspace(), mean, base.cst, shat, eps, mode);
    (Block { attention, ffn }, eps)
}

fn check_a(params: &ConstructionParams) -> Result<(), ConstructError> {
    if params.a != 0.0 {
        return Err(ConstructError::Params("BOS-free constructions average uniformly and need a = 0".into()));
    }
    Ok(())
}

pub fn build_dyck_recognizer_nobos(k: usize, params: &ConstructionParams) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    check_a(params)?;
    let m = code_width(k);
    let mut lay = Layout::new();
    let base = NobosBase::alloc(&mut lay, m);
    let mean = lay.block("mean", m + 2);
    let shat = lay.ch("s_hat");
    let (av, bpos, cphi, sphi) = (lay.ch("b2.a"), lay.ch("b2.bpos"), lay.ch("cos_phi"), lay.ch("sin_phi"));
    let (cprev, sprev) = (lay.ch("cos_phi_prev"), lay.ch("sin_phi_prev"));
    let tprev = lay.block("t_prev_raw", m);
    let oprev = lay.ch("o_prev_raw");
    let vt = lay.block("v_t", m);
    let vo = lay.ch("v_o");
    let (bd, bd1, cth, sth) = (lay.ch("b5.bd"), lay.ch("b5.bd1"), lay.ch("cos_theta"), lay.ch("sin_theta"));
    let (cth1, sth1) = (lay.ch("cos_theta1"), lay.ch("sin_theta1"));
    let tt = lay.block("t_fetched", m);
    let q = lay.ch("q");
    let (qle, out) = (lay.ch("q_le"), lay.ch("out"));
    let d = lay.used().max(8 * m + 6);
    let cst = base.cst;
    let count = mode_for(params.attn, Role::Counting);
    let select = mode_for(params.attn, Role::Selection);

    let (b1, eps_pb) = pseudo_bos_block(d, &base, &mean, shat, params.n_max, count);

    let b2 = Block {
        attention: bos_counting_attn(
            d,
            cst,
            shat,
            0.0,
            &[(av, vec![(shat, 1.0)]), (bpos, vec![(cst, 1.0), (shat, -1.0)])],
            count,
        ),
        ffn: angle_ffn(d, av, bpos, cphi, sphi),
    };
    let b3 = Block {
        attention: AttentionWeights::null(d),
        ffn: signed_angle_ffn(d, &[(av, 1.0)], &[(bpos, 1.0), (av, -1.0)], cprev, sprev),
    };

    let shift = ScoreSpec::new()
        .term(Feature::Cos { ch: cprev, partner: sprev }, Feature::Cos { ch: cphi, partner: sphi }, params.c_shift)
        .term(Feature::Sin { ch: sprev, partner: cprev }, Feature::Sin { ch: sphi, partner: cphi }, params.c_shift);
    let mut copy: Vec<(usize, Vec<(usize, f64)>)> =
        tprev.iter().zip(&base.t).map(|(&dst, &src)| (dst, vec![(src, 1.0)])).collect();
    copy.push((oprev, vec![(base.o, 1.0)]));
    let mut f4 = FfnBuilder::new(d, d);
    let g4 = (2.0 * (m as f64 + 1.0) / d as f64).sqrt();
    for (src, dst) in tprev.iter().copied().chain([oprev]).zip(vt.iter().copied().chain([vo])) {
        let rp = f4.row(&[(src, 1.0), (shat, -2.0)], g4, 0.0);
        let rn = f4.row(&[(src, -1.0), (shat, -2.0)], g4, 0.0);
        f4.out(rp, dst, 1.0);
        f4.out(rn, dst, -1.0);
    }
    let b4 = Block { attention: selection_attn(&shift, d, &copy, select), ffn: f4.finish() };

    let b5 = Block {
        attention: bos_counting_attn(
            d,
            cst,
            shat,
            0.0,
            &[(bd, vec![(vo, 1.0)]), (bd1, vec![(vo, 1.0), (shat, 1.0)])],
            count,
        ),
        ffn: signed_angle_ffn(d, &[(av, 1.0)], &[(bd, 1.0)], cth, sth),
    };
    let b6 = Block {
        attention: AttentionWeights::null(d),
        ffn: signed_angle_ffn(d, &[(av, 1.0)], &[(bd1, 1.0)], cth1, sth1),
    };

    let fetch = fetch_spec(
        &FetchChannels { qdepth: (cth1, sth1), kdepth: (cth, sth), pos: (cphi, sphi), o: vo, s: shat, cst },
        params.c1_4,
        params.c2_4,
        true,
    );
    let copy_t: Vec<(usize, Vec<(usize, f64)>)> =
        tt.iter().zip(&vt).map(|(&dst, &src)| (dst, vec![(src, 1.0)])).collect();
    let qch = QSignChannels { t: &vt, tt: &tt, o: vo, cst, q };
    let f7: FfnWeights = if params.attn == AttnPolicy::Softmax {
        qsign_ffn_recov(d, &qch, params.recov_eps, params.recov_c)?
    } else {
        qsign_ffn(d, &qch, params.c3_4)
    };
    let q0 = q_at_bos(&f7, d, cst, shat, q)?;
    let b7 = Block { attention: selection_attn(&fetch, d, &copy_t, select), ffn: f7 };

    let vch = ViolationChannels { cst, s: shat, q, qle, cos: cth, sin: sth, out };
    let (a8, f8, spec8) = violation_block(d, &vch, params.c1_5, q0, select);
    let b8 = Block { attention: a8, ffn: f8 };

    let model = TransformerModel {
        k,
        d_model: d,
        w_emb: base.embedding(k, d),
        positional: None,
        blocks: vec![b1, b2, b3, b4, b5, b6, b7, b8],
    };
    model.validate()?;
    let b = theta(1.0, 0.0).sin() / (2.0 * 2f64.sqrt());
    let head = recognizer_head(d, out, b);
    let mut derived = BTreeMap::new();
    derived.insert("q_bos".into(), q0);
    derived.insert("pseudo_bos_eps".into(), eps_pb);
    derived.insert("head_bias".into(), b);
    Ok(BuiltNetwork {
        task: Task::DyckRecNobos,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "dyck-recognizer-nobos-8-block".into(),
            channels: lay.into_map(),
            selection: vec![
                SelectionLayer { block: 3, spec: shift },
                SelectionLayer { block: 6, spec: fetch },
                SelectionLayer { block: 7, spec: spec8 },
            ],
            gen: None,
            derived,
        },
    })
}

pub fn build_dyck_generator_nobos(
    k: usize,
    params: &ConstructionParams,
    gen_params: &DyckGenParams,
) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    check_a(params)?;
    if gen_params.k() != k {
        return Err(ConstructError::Params(format!("generation params have {} types, expected {k}", gen_params.k())));
    }
    let m = code_width(k);
    let mut lay = Layout::new();
    let base = NobosBase::alloc(&mut lay, m);
    let mean = lay.block("mean", m + 2);
    let shat = lay.ch("s_hat");
    let (av, bpos, bd) = (lay.ch("b2.a"), lay.ch("b2.bpos"), lay.ch("b2.bd"));
    let (cphi, sphi) = (lay.ch("cos_phi"), lay.ch("sin_phi"));
    let (cth, sth) = (lay.ch("cos_theta"), lay.ch("sin_theta"));
    let tt = lay.block("t_fetched", m);
    let ind = Indicators::alloc(&mut lay);
    let d = lay.used();
    let (cst, o) = (base.cst, base.o);
    let count = mode_for(params.attn, Role::Counting);
    let select = mode_for(params.attn, Role::Selection);
    let c2 = if params.attn == AttnPolicy::Softmax { params.c2_gen } else { params.c2_4 };

    let (b1, eps_pb) = pseudo_bos_block(d, &base, &mean, shat, params.n_max, count);
    let b2 = Block {
        attention: bos_counting_attn(
            d,
            cst,
            shat,
            0.0,
            &[(av, vec![(shat, 1.0)]), (bpos, vec![(cst, 1.0), (shat, -1.0)]), (bd, vec![(o, 1.0)])],
            count,
        ),
        ffn: angle_ffn(d, av, bpos, cphi, sphi),
    };
    let b3 =
        Block { attention: AttentionWeights::null(d), ffn: signed_angle_ffn(d, &[(av, 1.0)], &[(bd, 1.0)], cth, sth) };

    let cc = params.c1_4 * c2;
    let one = Feature::Const { ch: cst };
    let fetch = ScoreSpec::new()
        .term(Feature::Cos { ch: cth, partner: sth }, Feature::Cos { ch: cth, partner: sth }, cc)
        .term(Feature::Sin { ch: sth, partner: cth }, Feature::Sin { ch: sth, partner: cth }, cc)
        .term(one.clone(), Feature::Open { ch: o, partner: shat }, cc)
        .term(one.clone(), one, -cc)
        .term(Feature::Sin { ch: sphi, partner: cphi }, Feature::Cos { ch: cphi, partner: sphi }, -c2)
        .term(Feature::Cos { ch: cphi, partner: sphi }, Feature::Sin { ch: sphi, partner: cphi }, c2);
    let copy_t: Vec<(usize, Vec<(usize, f64)>)> =
        tt.iter().zip(&base.t).map(|(&dst, &src)| (dst, vec![(src, 1.0)])).collect();
    let b4 = Block {
        attention: selection_attn(&fetch, d, &copy_t, select),
        ffn: indicator_ffn(d, cth, sth, params.eps_3, &ind),
    };
    let model =
        TransformerModel { k, d_model: d, w_emb: base.embedding(k, d), positional: None, blocks: vec![b1, b2, b3, b4] };
    model.validate()?;
    let head = dyck_gen_head(k, d, cst, &tt, &ind, gen_params, params.c0_gen, params.eps_3);
    model.validate_head(&head)?;
    let mut derived = BTreeMap::new();
    derived.insert("pseudo_bos_eps".into(), eps_pb);
    derived.insert("tv_bound".into(), 2.0 * (k as f64 + 1.0) * (-params.c0_gen).exp());
    Ok(BuiltNetwork {
        task: Task::DyckGenNobos,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "dyck-generator-nobos-4-block".into(),
            channels: lay.into_map(),
            selection: vec![SelectionLayer { block: 3, spec: fetch }],
            gen: Some(GenParams::Dyck(gen_params.clone())),
            derived,
        },
    })
}
