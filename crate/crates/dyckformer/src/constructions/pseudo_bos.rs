//! A start-of-sequence signal computed without a BOS token.
//!
//! Uniform attention averages the embeddings seen so far; position 0 is the
//! only position where the current embedding equals that average. An FFN
//! reads `1/‖(x − x̄, 1)‖` and thresholds it just below 1.

use super::layout::{AttnBuilder, FfnBuilder};
use crate::transformer_core::{AttentionWeights, AttnMode, FfnWeights};

/// Largest power of two `ε ≤ (1 − 1/√(1+g))/2` with
/// `g = δ⁴/(4n²R²)`, for `n` positions, embedding norm² `R²` and minimum
/// squared distance `δ²` between distinct embeddings.
pub fn pseudo_bos_eps(n: usize, r2: f64, delta2: f64) -> f64 {
    let n = n.max(1) as f64;
    let g = delta2 * delta2 / (4.0 * n * n * r2);
    let bound = (1.0 - 1.0 / (1.0 + g).sqrt()) / 2.0;
    let mut e = 1.0;
    while e > bound {
        e /= 2.0;
    }
    e
}

/// Pseudo-BOS layers on explicit channels of a larger stream.
pub(crate) fn pseudo_bos_layers(
    d: usize,
    x: &[usize],
    mean: &[usize],
    cst: usize,
    shat: usize,
    eps: f64,
    mode: AttnMode,
) -> (AttentionWeights, FfnWeights) {
    let mut at = AttnBuilder::new(d);
    for (&m, &xi) in mean.iter().zip(x) {
        at.value(m, &[(xi, 1.0)]);
    }
    let mut f = FfnBuilder::new(d, d);
    let g = (1.0 / d as f64).sqrt();
    for (&xi, &m) in x.iter().zip(mean) {
        f.row(&[(xi, 1.0), (m, -1.0)], g, 0.0);
    }
    let r = f.row(&[(cst, 1.0)], g, -1.0 + eps);
    f.out(r, shat, 1.0 / eps);
    (at.finish(mode), f.finish())
}

/// The standalone block on the padded layout `[x; x̄; 1; ŝ]` of width
/// `2·d_model + 2`. Input vectors must carry 1 in the constant slot and
/// zeros in the `x̄` and `ŝ` slots.
pub fn build_pseudo_bos_block(d_model: usize, eps: f64) -> (AttentionWeights, FfnWeights) {
    let width = 2 * d_model + 2;
    let x: Vec<usize> = (0..d_model).collect();
    let mean: Vec<usize> = (d_model..2 * d_model).collect();
    pseudo_bos_layers(width, &x, &mean, 2 * d_model, 2 * d_model + 1, eps, AttnMode::Softmax)
}
