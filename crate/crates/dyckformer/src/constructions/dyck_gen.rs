//! The three-block Dyck generator and its head.

use std::collections::BTreeMap;

use super::blocks::{
    angle_ffn, bos_counting_attn, fetch_spec, mode_for, selection_attn, signed_angle_ffn, FetchChannels, Role,
};
use super::dyck_rec::DyckBase;
use super::layout::{FfnBuilder, Layout};
use super::{
    code_width, AttnPolicy, BuiltNetwork, ConstructError, ConstructionMeta, ConstructionParams, SelectionLayer, Task,
};
use crate::lang_core::{DyckGenParams, GenParams};
use crate::tensor_ops::Matrix;
use crate::transformer_core::{Block, FfnWeights, Head, TransformerModel};

/// Output channels of the depth-indicator FFN:
/// `[sin θ]₊`, `[sin θ − ε]₊`, `[−sin θ]₊`, `[ε − sin θ]₊`.
pub(crate) struct Indicators {
    pub pos: usize,
    pub pos_eps: usize,
    pub neg: usize,
    pub neg_eps: usize,
}

impl Indicators {
    pub fn alloc(lay: &mut Layout) -> Self {
        Self {
            pos: lay.ch("ind.pos"),
            pos_eps: lay.ch("ind.pos_eps"),
            neg: lay.ch("ind.neg"),
            neg_eps: lay.ch("ind.neg_eps"),
        }
    }
}

/// FFN on rows `(sin, sin, −sin, −sin, 2cos)` with offsets `(0, −ε, 0, ε, 0)`.
pub(crate) fn indicator_ffn(d: usize, cos: usize, sin: usize, eps: f64, ind: &Indicators) -> FfnWeights {
    let mut f = FfnBuilder::new(d, d);
    let g = (4.0 / d as f64).sqrt();
    let r0 = f.row(&[(sin, 1.0)], g, 0.0);
    let r1 = f.row(&[(sin, 1.0)], g, -eps);
    let r2 = f.row(&[(sin, -1.0)], g, 0.0);
    let r3 = f.row(&[(sin, -1.0)], g, eps);
    f.row(&[(cos, 2.0)], g, 0.0);
    f.out(r0, ind.pos, 1.0);
    f.out(r1, ind.pos_eps, 1.0);
    f.out(r2, ind.neg, 1.0);
    f.out(r3, ind.neg_eps, 1.0);
    f.finish()
}

/// Generator head: opens `C₀ + log π_t`; closes
/// `−C₀(m − t_tᵀt̃) + C₁ᵍᵉⁿ·𝕀[d ≥ 1]`; BOS 0; EOS `C₂ᵍᵉⁿ·𝕀[d ≤ 0]`.
pub(crate) fn dyck_gen_head(
    k: usize,
    d: usize,
    cst: usize,
    tt: &[usize],
    ind: &Indicators,
    gp: &DyckGenParams,
    c0: f64,
    eps: f64,
) -> Head {
    let m = tt.len();
    let vocab = 2 * k + 2;
    let mut w = Matrix::zeros(vocab, d);
    let mut b = vec![0.0; vocab];
    let c1 = ((1.0 - gp.q) / gp.q).ln() + c0;
    let c2 = ((1.0 - gp.r) / gp.r).ln() + c0;
    for t in 1..=k {
        b[t - 1] = c0 + gp.pi[t - 1].ln();
        let row = k + t - 1;
        w[(row, cst)] = -c0 * m as f64;
        for (&ch, code) in tt.iter().zip(super::blocks::binary_code(t, m)) {
            w[(row, ch)] = c0 * code;
        }
        w[(row, ind.pos)] += c1 / eps;
        w[(row, ind.pos_eps)] -= c1 / eps;
    }
    let eos = 2 * k + 1;
    w[(eos, ind.neg_eps)] = c2 / eps;
    w[(eos, ind.neg)] = -c2 / eps;
    Head::Generator { w, b }
}

pub fn build_dyck_generator(
    k: usize,
    gen_params: &DyckGenParams,
    params: &ConstructionParams,
) -> Result<BuiltNetwork, ConstructError> {
    params.validate(k)?;
    if gen_params.k() != k {
        return Err(ConstructError::Params(format!("generation params have {} types, expected {k}", gen_params.k())));
    }
    let m = code_width(k);
    let a = params.a;
    let mut lay = Layout::new();
    let base = DyckBase::alloc(&mut lay, m);
    let (a1, b1, cphi, sphi) = (lay.ch("l1.a"), lay.ch("l1.b"), lay.ch("cos_phi"), lay.ch("sin_phi"));
    let (a2, b2, cth, sth) = (lay.ch("l2.a"), lay.ch("l2.b"), lay.ch("cos_theta"), lay.ch("sin_theta"));
    let tt = lay.block("t_fetched", m);
    let ind = Indicators::alloc(&mut lay);
    let d = lay.used();
    let (cst, s, o) = (base.cst, base.s, base.o);
    let count = mode_for(params.attn, Role::Counting);
    let select = mode_for(params.attn, Role::Selection);
    let c2 = if params.attn == AttnPolicy::Softmax { params.c2_gen } else { params.c2_4 };

    let l1 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a1, vec![(s, 1.0)]), (b1, vec![(cst, 1.0), (s, -1.0)])], count),
        ffn: angle_ffn(d, a1, b1, cphi, sphi),
    };
    let l2 = Block {
        attention: bos_counting_attn(d, cst, s, a, &[(a2, vec![(s, 1.0)]), (b2, vec![(o, 1.0)])], count),
        ffn: signed_angle_ffn(d, &[(a2, 1.0)], &[(b2, 1.0)], cth, sth),
    };
    let fetch = fetch_spec(
        &FetchChannels { qdepth: (cth, sth), kdepth: (cth, sth), pos: (cphi, sphi), o, s, cst },
        params.c1_4,
        c2,
        false,
    );
    let copy_t: Vec<(usize, Vec<(usize, f64)>)> =
        tt.iter().zip(&base.t).map(|(&dst, &src)| (dst, vec![(src, 1.0)])).collect();
    let l3 = Block {
        attention: selection_attn(&fetch, d, &copy_t, select),
        ffn: indicator_ffn(d, cth, sth, params.eps_3, &ind),
    };
    let model =
        TransformerModel { k, d_model: d, w_emb: base.embedding(k, d), positional: None, blocks: vec![l1, l2, l3] };
    model.validate()?;
    let head = dyck_gen_head(k, d, cst, &tt, &ind, gen_params, params.c0_gen, params.eps_3);
    model.validate_head(&head)?;
    let mut derived = BTreeMap::new();
    derived.insert("c1_gen".into(), ((1.0 - gen_params.q) / gen_params.q).ln() + params.c0_gen);
    derived.insert("c2_gen_head".into(), ((1.0 - gen_params.r) / gen_params.r).ln() + params.c0_gen);
    derived.insert("tv_bound".into(), 2.0 * (k as f64 + 1.0) * (-params.c0_gen).exp());
    Ok(BuiltNetwork {
        task: Task::DyckGen,
        model,
        head,
        params: params.clone(),
        meta: ConstructionMeta {
            proof: "dyck-generator-3-block".into(),
            channels: lay.into_map(),
            selection: vec![SelectionLayer { block: 2, spec: fetch }],
            gen: Some(GenParams::Dyck(gen_params.clone())),
            derived,
        },
    })
}
