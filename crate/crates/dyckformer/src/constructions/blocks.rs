//! Layer builders shared by several constructions.

use super::layout::{AttnBuilder, FfnBuilder};
use super::recov::{check_eps, ramp_offsets};
use super::score::{Feature, ScoreSpec};
use super::{AttnPolicy, ConstructError};
use crate::lang_core::{Alphabet, Token};
use crate::tensor_ops::Matrix;
use crate::transformer_core::{AttentionWeights, AttnMode, FfnWeights};

/// Whether a layer counts/averages or selects a single key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Counting,
    Selection,
}

pub(crate) fn mode_for(policy: AttnPolicy, role: Role) -> AttnMode {
    match (policy, role) {
        (AttnPolicy::Hardmax, _) | (AttnPolicy::PerConstruction, Role::Selection) => AttnMode::Hardmax,
        _ => AttnMode::Softmax,
    }
}

/// Binary `±1` code of type `t ∈ 1..=k` on `m` bits (bit set ↦ +1).
pub(crate) fn binary_code(t: usize, m: usize) -> Vec<f64> {
    (0..m).map(|b| if ((t - 1) >> b) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// `d × (2k+2)` embedding whose column for each token is given by `col`.
pub(crate) fn embedding(k: usize, d: usize, col: impl Fn(Token) -> Vec<(usize, f64)>) -> Matrix {
    let alpha = Alphabet::new(k).expect("k ≥ 1");
    let mut w = Matrix::zeros(d, alpha.vocab_size());
    for tok in alpha.tokens() {
        let id = alpha.id_of(tok).expect("in range");
        for (r, v) in col(tok) {
            w[(r, id)] += v;
        }
    }
    w
}

/// Attention whose only score is `a·s_j` (query reads the constant
/// channel). With `a = 0` it is uniform averaging.
pub(crate) fn bos_counting_attn(
    d: usize,
    cst: usize,
    s: usize,
    a: f64,
    values: &[(usize, Vec<(usize, f64)>)],
    mode: AttnMode,
) -> AttentionWeights {
    let mut b = AttnBuilder::new(d);
    if a != 0.0 {
        b.wq[(0, cst)] = 1.0;
        b.wk[(0, s)] = a;
    }
    for (dst, lin) in values {
        b.value(*dst, lin);
    }
    b.finish(mode)
}

/// Selection attention compiled from a score decomposition.
pub(crate) fn selection_attn(
    spec: &ScoreSpec,
    d: usize,
    values: &[(usize, Vec<(usize, f64)>)],
    mode: AttnMode,
) -> AttentionWeights {
    let (wq, wk) = spec.compile(d);
    let mut b = AttnBuilder::new(d);
    for (dst, lin) in values {
        b.value(*dst, lin);
    }
    AttentionWeights { mode, wq, wk, wv: b.wv, qk_norm: None }
}

/// `(A, B) ↦ (cos, sin)` of the angle with `tan = B/A`, for `A > 0`, `B ≥ 0`.
pub(crate) fn angle_ffn(d: usize, a: usize, b: usize, cos: usize, sin: usize) -> FfnWeights {
    let mut f = FfnBuilder::new(d, d);
    let g = (1.0 / d as f64).sqrt();
    let r0 = f.row(&[(a, 1.0)], g, 0.0);
    let r1 = f.row(&[(b, 1.0)], g, 0.0);
    f.out(r0, cos, 1.0);
    f.out(r1, sin, 1.0);
    f.finish()
}

/// Same as [`angle_ffn`] but allows a signed `B` (two ReLU halves).
pub(crate) fn signed_angle_ffn(d: usize, a: &[(usize, f64)], b: &[(usize, f64)], cos: usize, sin: usize) -> FfnWeights {
    let neg = |lin: &[(usize, f64)]| lin.iter().map(|&(c, w)| (c, -w)).collect::<Vec<_>>();
    let mut f = FfnBuilder::new(d, d);
    let g = (2.0 / d as f64).sqrt();
    let r0 = f.row(a, g, 0.0);
    f.row(&neg(a), g, 0.0);
    let r2 = f.row(b, g, 0.0);
    let r3 = f.row(&neg(b), g, 0.0);
    f.out(r0, cos, 1.0);
    f.out(r2, sin, 1.0);
    f.out(r3, sin, -1.0);
    f.finish()
}

/// Channels read and written by the type-conflict FFN.
pub(crate) struct QSignChannels<'a> {
    pub t: &'a [usize],
    pub tt: &'a [usize],
    pub o: usize,
    pub cst: usize,
    pub q: usize,
}

/// Hardmax-mode conflict statistic
/// `q ∝ −‖t − t̃‖₁ + C₃(o + 1) + 1`, scaled so that `|q| > 1` away from 0.
pub(crate) fn qsign_ffn(d: usize, ch: &QSignChannels, c3: f64) -> FfnWeights {
    let m = ch.t.len();
    let mut f = FfnBuilder::new(d, d);
    let g = 8.0 * (m as f64 / d as f64).sqrt();
    for sign in [1.0, -1.0] {
        for (&t, &tt) in ch.t.iter().zip(ch.tt) {
            let r = f.row(&[(t, sign), (tt, -sign)], g, 0.0);
            f.out(r, ch.q, -1.0);
        }
    }
    let ro = f.row(&[(ch.o, 1.0), (ch.cst, 1.0)], g, 0.0);
    f.out(ro, ch.q, c3);
    let rc = f.row(&[(ch.cst, 1.0)], g, 0.0);
    f.out(rc, ch.q, 1.0);
    f.finish()
}

/// Softmax-mode conflict statistic built from recovering-function ramps:
/// `q̃ = −2‖t − t̃‖₁ + 4(m+1)(o+1) + 2` on the noise plateaus.
pub(crate) fn qsign_ffn_recov(d: usize, ch: &QSignChannels, eps: f64, c: f64) -> Result<FfnWeights, ConstructError> {
    check_eps(eps)?;
    let m = ch.t.len();
    let h = d;
    if h < 8 * m + 6 {
        return Err(ConstructError::Params(format!("recovering FFN needs width {} but d_model = {d}", 8 * m + 6)));
    }
    let mut f = FfnBuilder::new(d, h);
    let g = (2.0 * c * c / h as f64).sqrt() / eps;
    let offs = ramp_offsets(eps);
    let pattern = [1.0, -1.0, 1.0, -1.0];
    for sign in [1.0, -1.0] {
        for (&t, &tt) in ch.t.iter().zip(ch.tt) {
            for (b, p) in offs.iter().zip(pattern) {
                let r = f.row(&[(t, sign), (tt, -sign)], g, *b);
                f.out(r, ch.q, -2.0 * p);
            }
        }
    }
    let c3 = 2.0 * (m as f64 + 1.0);
    for (b, p) in offs.iter().zip(pattern) {
        let r = f.row(&[(ch.o, 1.0), (ch.cst, 1.0)], g, *b);
        f.out(r, ch.q, 2.0 * c3 * p);
    }
    for (b, p) in offs[..2].iter().zip(pattern) {
        let r = f.row(&[(ch.cst, c)], g / c, *b);
        f.out(r, ch.q, 2.0 * p);
    }
    Ok(f.finish())
}

/// Channels of the BOS-or-violation block.
pub(crate) struct ViolationChannels {
    pub cst: usize,
    pub s: usize,
    pub q: usize,
    pub qle: usize,
    pub cos: usize,
    pub sin: usize,
    pub out: usize,
}

/// Score spec of the BOS-or-violation selection: BOS scores 0, keys with
/// `q > 0` score `−C·q`, keys with `q < 0` score `+C·|q|`.
pub(crate) fn violation_spec(ch: &ViolationChannels, c: f64, q0: f64) -> ScoreSpec {
    let k = Feature::Const { ch: ch.cst };
    ScoreSpec::new().term(k.clone(), Feature::Free { lin: vec![(ch.q, -1.0)] }, c).term(
        k,
        Feature::Free { lin: vec![(ch.s, q0)] },
        c,
    )
}

/// Attention `q≤ ← Σ α (1 − s)` plus the FFN `out = (q≤ + [sin θ]₊)/‖·‖`.
pub(crate) fn violation_block(
    d: usize,
    ch: &ViolationChannels,
    c: f64,
    q0: f64,
    mode: AttnMode,
) -> (AttentionWeights, FfnWeights, ScoreSpec) {
    let spec = violation_spec(ch, c, q0);
    let attn = selection_attn(&spec, d, &[(ch.qle, vec![(ch.cst, 1.0), (ch.s, -1.0)])], mode);
    let mut f = FfnBuilder::new(d, d);
    let g = (1.0 / d as f64).sqrt();
    let r0 = f.row(&[(ch.qle, 1.0)], g, 0.0);
    f.row(&[(ch.cos, 1.0)], g, 0.0);
    let r2 = f.row(&[(ch.sin, 1.0)], g, 0.0);
    f.out(r0, ch.out, 1.0);
    f.out(r2, ch.out, 1.0);
    (attn, f.finish(), spec)
}

/// Type-fetch score `C₂(C₁T^depth + T^pos [+ C₁T^open])`.
///
/// `qdepth`/`kdepth` are the `(cos, sin)` channels of the query and key
/// depth angles; `o`, `s` the openness and start channels; `pos` the
/// `(cos φ, sin φ)` channels.
pub(crate) struct FetchChannels {
    pub qdepth: (usize, usize),
    pub kdepth: (usize, usize),
    pub pos: (usize, usize),
    pub o: usize,
    pub s: usize,
    pub cst: usize,
}

pub(crate) fn fetch_spec(ch: &FetchChannels, c1: f64, c2: f64, with_open: bool) -> ScoreSpec {
    let cc = c1 * c2;
    let cq = Feature::Cos { ch: ch.qdepth.0, partner: ch.qdepth.1 };
    let sq = Feature::Sin { ch: ch.qdepth.1, partner: ch.qdepth.0 };
    let ck = Feature::Cos { ch: ch.kdepth.0, partner: ch.kdepth.1 };
    let sk = Feature::Sin { ch: ch.kdepth.1, partner: ch.kdepth.0 };
    let cp = Feature::Cos { ch: ch.pos.0, partner: ch.pos.1 };
    let sp = Feature::Sin { ch: ch.pos.1, partner: ch.pos.0 };
    let o = Feature::Open { ch: ch.o, partner: ch.s };
    let s = Feature::Start { ch: ch.s, partner: ch.o };
    let one = Feature::Const { ch: ch.cst };
    let mut spec = ScoreSpec::new()
        .term(cq.clone(), ck, cc)
        .term(sq, sk, cc)
        .term(one.clone(), s.clone(), if with_open { 3.0 * cc } else { 2.0 * cc })
        .term(cq, s.clone(), -cc)
        .term(one.clone(), o.clone(), cc)
        .term(one.clone(), one, -cc)
        .term(sp.clone(), cp.clone(), -c2)
        .term(cp, sp, c2);
    if with_open {
        spec = spec.term(o, s.clone(), cc).term(s.clone(), s, -cc);
    }
    spec
}

/// Recognizer head `−out + b`.
pub(crate) fn recognizer_head(d: usize, out: usize, b: f64) -> crate::transformer_core::Head {
    let mut w = vec![0.0; d];
    w[out] = -1.0;
    crate::transformer_core::Head::Recognizer { w, b }
}
