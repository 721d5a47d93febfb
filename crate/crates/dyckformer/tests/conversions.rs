use dyckformer::constructions::{build_dyck_recognizer, build_shuffle_recognizer, select_constants_with, AttnPolicy};
use dyckformer::conversions::{
    ln_ffn_network, qkln_to_qkrmsln, qkrmsln_to_qkln, rmsln_ffn_to_ln_ffn, wrap_selection_layers, ConversionError,
};
use dyckformer::evalkit::enumerate_bodies;
use dyckformer::lang_core::TokenSequence;
use dyckformer::tensor_ops::Matrix;
use dyckformer::transformer_core::{
    attention_scores, ffn_forward, AttentionWeights, AttnMode, FfnWeights, NormKind, QkNorm,
};
use proptest::prelude::*;

fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, v[..rows * cols].to_vec()).unwrap()
}

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

fn arb(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rms_ffn_equals_its_ln_rewrite(d in 2usize..8, h in 1usize..8, w in arb(128), gb in arb(16), xs in arb(40)) {
        let ffn = FfnWeights { norm: NormKind::Rms, w1: mat(h, d, &w), w2: mat(d, h, &w[64..]), gamma: gb[..h].to_vec(), beta: gb[8..8 + h].to_vec() };
        let x: Vec<Vec<f64>> = xs.chunks(d).filter(|c| c.len() == d).map(|c| c.to_vec()).collect();
        let ln = rmsln_ffn_to_ln_ffn(&ffn).unwrap();
        prop_assert_eq!(ln.norm, NormKind::Layer);
        prop_assert_eq!(ln.hidden(), 2 * h);
        prop_assert!(close(&ffn_forward(&ffn, &x).unwrap(), &ffn_forward(&ln, &x).unwrap(), 1e-12));
    }

    #[test]
    fn qk_norm_rewrites_preserve_scores(d in 2usize..6, dqk in 1usize..5, w in arb(120), gb in arb(20), xs in arb(36)) {
        let x: Vec<Vec<f64>> = xs.chunks(d).filter(|c| c.len() == d).map(|c| c.to_vec()).collect();
        for kind in [NormKind::Layer, NormKind::Rms] {
            let a = AttentionWeights {
                mode: AttnMode::Softmax,
                wq: mat(dqk, d, &w),
                wk: mat(dqk, d, &w[30..]),
                wv: mat(d, d, &w[60..]),
                qk_norm: Some(QkNorm { kind, gamma_q: gb[..dqk].to_vec(), beta_q: gb[5..5 + dqk].to_vec(), gamma_k: gb[10..10 + dqk].to_vec(), beta_k: gb[15..15 + dqk].to_vec() }),
            };
            let b = if kind == NormKind::Layer { qkln_to_qkrmsln(&a).unwrap() } else { qkrmsln_to_qkln(&a).unwrap() };
            prop_assert_ne!(b.qk_norm.as_ref().unwrap().kind, kind);
            prop_assert!(close(&attention_scores(&a, &x).unwrap(), &attention_scores(&b, &x).unwrap(), 1e-12));
        }
    }
}

#[test]
fn rewrites_reject_the_wrong_variant() {
    let ffn = FfnWeights::null(3);
    let mut ln = ffn.clone();
    ln.norm = NormKind::Layer;
    assert!(matches!(rmsln_ffn_to_ln_ffn(&ln), Err(ConversionError::Variant { .. })));
    assert!(matches!(qkln_to_qkrmsln(&AttentionWeights::null(3)), Err(ConversionError::Variant { found: None, .. })));
}

#[test]
fn converted_recognizers_keep_every_verdict() {
    for k in [1usize, 2] {
        let seqs: Vec<TokenSequence> = enumerate_bodies(k, 6).iter().map(|b| TokenSequence::framed(b)).collect();
        for attn in [AttnPolicy::PerConstruction, AttnPolicy::Softmax] {
            let p = select_constants_with(k, 12, 0.8, attn).0;
            for net in [build_dyck_recognizer(k, &p).unwrap(), build_shuffle_recognizer(k, &p).unwrap()] {
                let conv = wrap_selection_layers(&ln_ffn_network(&net).unwrap()).unwrap();
                assert!(conv.model.blocks.iter().all(|b| b.ffn.norm == NormKind::Layer));
                for s in &seqs {
                    assert_eq!(
                        net.recognize(s).unwrap().accept,
                        conv.recognize(s).unwrap().accept,
                        "{} {s:?}",
                        net.task
                    );
                }
            }
        }
    }
}
