//! The five-block Dyck recognizer.
//!
//! Blocks 1–3 compute the positional angle `φ(i)` and the depth angles
//! `θ(d)`, `θ(d+1)` by averaging against BOS. Block 4 fetches the type of the
//! nearest depth-matched open bracket and turns a type conflict into a
//! negative statistic `q`. Block 5 attends to BOS unless some `q` is
//! negative, and the head accepts iff nothing was flagged and the final depth
//! is zero.

use std::collections::BTreeMap;

use super::blocks::{
    angle_ffn, binary_code, bos_counting_attn, embedding, fetch_spec, mode_for, qsign_ffn, qsign_ffn_recov,
    recognizer_head, selection_attn, signed_angle_ffn, violation_block, FetchChannels, QSignChannels, Role,
    ViolationChannels,
};
use super::layout::Layout;
use super::select::theta;
use super::{
    code_width, AttnPolicy, BuiltNetwork, ConstructError, ConstructionMeta, ConstructionParams, SelectionLayer, Task,
};
use crate::lang_core::Token;
use crate::transformer_core::{ffn_forward, Block, FfnWeights, TransformerModel};

/// Channels of the Dyck embedding `(t, o, s, 1)`.
pub(crate) struct DyckBase {
    pub t: Vec<usize>,
    pub o: usize,
    pub s: usize,
    pub cst: usize,
}

impl DyckBase {
    pub fn alloc(lay: &mut Layout, m: usize) -> Self {
        Self { t: lay.block("t", m), o: lay.ch("o"), s: lay.ch("s"), cst: lay.ch("const") }
    }

    pub fn embedding(&self, k: usize, d: usize) -> crate::tensor_ops::Matrix {
        let m = self.t.len();
        embedding(k, d, |tok| {
            let mut col = vec![(self.cst, 1.0)];
            match tok {
                Token::Open(t) | Token::Close(t) => {
                    col.extend(self.t.iter().copied().zip(binary_code(t, m)));
                    col.push((self.o, tok.openness() as f64));
                }
                Token::Bos => col.push((self.s, 1.0)),
                Token::Eos => {}
            }
            col
        })
    }
}

/// `q` at a BOS position (used as the BOS key offset in block 5).
pub(crate) fn q_at_bos(ffn: &FfnWeights, d: usize, cst: usize, s: usize, q: usize) -> Result<f64, ConstructError> {
    let mut x = vec![0.0; d];
    x[cst] = 1.0;
    x[s] = 1.0;
    Ok(ffn_forward(ffn, &vec![x])?[0][q])
}

pub fn build_dyck_recognizer(k: usize, params: &ConstructionParams) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    let m = code_width(k);
    let a = params.a;
    let mut lay = Layout::new();
    let base = DyckBase::alloc(&mut lay, m);
    let (a1, b1, cphi, sphi) = (lay.ch("l1.a"), lay.ch("l1.b"), lay.ch("cos_phi"), lay.ch("sin_phi"));
    let (a2, b2, cth, sth) = (lay.ch("l2.a"), lay.ch("l2.b"), lay.ch("cos_theta"), lay.ch("sin_theta"));
    let (a3, b3, cth1, sth1) = (lay.ch("l3.a"), lay.ch("l3.b"), lay.ch("cos_theta1"), lay.ch("sin_theta1"));
    let tt = lay.block("t_fetched", m);
    let q = lay.ch("q");
    let (qle, out) = (lay.ch("q_le"), lay.ch("out"));
    let d = lay.used().max(8 * m + 6);
    let (cst, s, o) = (base.cst, base.s, base.o);

    let count = mode_for(params.attn, Role::Counting);
    let select = mode_for(params.attn, Role::Selection);

    let l1 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a1, vec![(s, 1.0)]), (b1, vec![(cst, 1.0), (s, -1.0)])], count),
        ffn: angle_ffn(d, a1, b1, cphi, sphi),
    };
    let l2 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a2, vec![(s, 1.0)]), (b2, vec![(o, 1.0)])], count),
        ffn: signed_angle_ffn(d, &[(a2, 1.0)], &[(b2, 1.0)], cth, sth),
    };
    let l3 = Block {
        attention: bos_counting_attn(
            d,
            cst,
            s,
            a,
            &[(a3, vec![(s, 1.0)]), (b3, vec![(o, 1.0), (s, (-a).exp())])],
            count,
        ),
        ffn: signed_angle_ffn(d, &[(a3, 1.0)], &[(b3, 1.0)], cth1, sth1),
    };

    let fetch = fetch_spec(
        &FetchChannels { qdepth: (cth1, sth1), kdepth: (cth, sth), pos: (cphi, sphi), o, s, cst },
        params.c1_4,
        params.c2_4,
        true,
    );
    let copy_t: Vec<(usize, Vec<(usize, f64)>)> =
        tt.iter().zip(&base.t).map(|(&dst, &src)| (dst, vec![(src, 1.0)])).collect();
    let qch = QSignChannels { t: &base.t, tt: &tt, o, cst, q };
    let l4_ffn = if params.attn == AttnPolicy::Softmax {
        qsign_ffn_recov(d, &qch, params.recov_eps, params.recov_c)?
    } else {
        qsign_ffn(d, &qch, params.c3_4)
    };
    let q0 = q_at_bos(&l4_ffn, d, cst, s, q)?;
    let l4 = Block { attention: selection_attn(&fetch, d, &copy_t, select), ffn: l4_ffn };

    let vch = ViolationChannels { cst, s, q, qle, cos: cth, sin: sth, out };
    let (l5_attn, l5_ffn, l5_spec) = violation_block(d, &vch, params.c1_5, q0, select);
    let l5 = Block { attention: l5_attn, ffn: l5_ffn };

    let model = TransformerModel {
        k,
        d_model: d,
        w_emb: base.embedding(k, d),
        positional: None,
        blocks: vec![l1, l2, l3, l4, l5],
    };
    model.validate()?;
    let b = theta(1.0, a).sin() / (2.0 * 2f64.sqrt());
    let head = recognizer_head(d, out, b);
    let mut derived = BTreeMap::new();
    derived.insert("q_bos".to_string(), q0);
    derived.insert("head_bias".to_string(), b);
    Ok(BuiltNetwork {
        task: Task::DyckRec,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "dyck-recognizer-5-block".into(),
            channels: lay.into_map(),
            selection: vec![SelectionLayer { block: 3, spec: fetch }, SelectionLayer { block: 4, spec: l5_spec }],
            gen: None,
            derived,
        },
    })
}
