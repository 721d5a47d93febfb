//! Constant selection by direct worst-case score sweeps.

use serde::{Deserialize, Serialize};

use super::{code_width, AttnPolicy, ConstructionParams};

/// `θ(d) = atan(d / eᵃ)`.
pub fn theta(d: f64, a: f64) -> f64 {
    (d / a.exp()).atan()
}

/// `φ(i) = atan(i / eᵃ)`.
pub fn phi(i: f64, a: f64) -> f64 {
    theta(i, a)
}

/// Smallest `1 − cos(θ(d) − θ(d′))` over distinct depths in `[−1, n_max + 1]`.
pub(crate) fn min_depth_gap(a: f64, n_max: usize) -> f64 {
    let top = n_max as i64 + 1;
    (-1..top).map(|d| 1.0 - (theta((d + 1) as f64, a) - theta(d as f64, a)).cos()).fold(f64::INFINITY, f64::min)
}

fn pow2_at_least(mut ok: impl FnMut(f64) -> bool) -> f64 {
    let mut e = -8i32;
    while !ok(2f64.powi(e)) {
        e += 1;
        assert!(e < 1000, "constant search did not terminate");
    }
    2f64.powi(e)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Worst-case sweep of the type-fetch score `C₂(C₁T^depth + T^pos)`.
///
/// For every query position `i ≤ positions` and every candidate target
/// `j* ≤ i`, earlier keys are charged as if they were depth-matched (their
/// score deficit is only the positional gap), later keys as mismatched
/// (deficit `C₁δ_min − 1`). Returns whether the target always keeps at least
/// `target` of the attention mass.
pub fn sweep_c2_ok(c1: f64, c2: f64, a: f64, positions: usize, target: f64) -> bool {
    let delta = min_depth_gap(a, positions.saturating_sub(1).max(1));
    let mismatch = c2 * (c1 * delta - 1.0);
    let budget = (1.0 / target - 1.0).ln();
    let phis: Vec<f64> = (0..=positions).map(|i| phi(i as f64, a)).collect();
    for i in 1..=positions {
        let mut lse = f64::NEG_INFINITY;
        for js in 0..=i {
            let u_star = (phis[i] - phis[js]).sin();
            let matched = lse + c2 * u_star;
            let later = ((i - js) as f64).ln() - mismatch;
            let log_off = log_add(matched, if i > js { later } else { f64::NEG_INFINITY });
            if log_off > budget {
                return false;
            }
            lse = log_add(lse, -c2 * u_star);
        }
    }
    true
}

/// Smallest gap between positional scores of two keys seen from one query.
fn min_pos_gap(a: f64, positions: usize) -> f64 {
    let phis: Vec<f64> = (0..=positions).map(|i| phi(i as f64, a)).collect();
    let mut g = f64::INFINITY;
    for i in 1..=positions {
        for j in 0..i {
            g = g.min((phis[i] - phis[j]).sin() - (phis[i] - phis[j + 1]).sin());
        }
    }
    g
}

/// Largest total off-target weight of the previous-position shift.
fn shift_log_off(c: f64, a: f64, positions: usize) -> f64 {
    let phis: Vec<f64> = (0..=positions).map(|i| phi(i as f64, a)).collect();
    let mut worst = f64::NEG_INFINITY;
    for p in 1..=positions {
        let mut lse = f64::NEG_INFINITY;
        for j in 0..=p {
            if j + 1 != p {
                lse = log_add(lse, -c * (1.0 - (phis[p - 1] - phis[j]).cos()));
            }
        }
        worst = worst.max(lse);
    }
    worst
}

/// Diagnostics of a constant search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub delta_min: f64,
    pub min_pos_gap: f64,
    /// `min_pos_gap / (C₁·ε_mach)`: headroom of the positional tie-break
    /// against rounding in the depth term.
    pub precision_ratio: f64,
    /// Whether `c2_4 / 2` fails the sweep.
    pub c2_minimal: bool,
}

/// [`select_constants_with`] under the default policy.
pub fn select_constants(k: usize, n_max: usize, target_weight: f64) -> ConstructionParams {
    select_constants_with(k, n_max, target_weight, AttnPolicy::PerConstruction).0
}

/// Smallest power-of-two constants that pass the worst-case sweeps for
/// inputs of up to `n_max` brackets (plus BOS and EOS), with `a = 0`.
pub fn select_constants_with(
    k: usize,
    n_max: usize,
    target_weight: f64,
    attn: AttnPolicy,
) -> (ConstructionParams, SelectReport) {
    let a = 0.0;
    let n_max = n_max.max(1);
    let positions = n_max + 1;
    let delta = min_depth_gap(a, n_max);
    let c1_4 = pow2_at_least(|c| c * delta > 2.0);
    let c2_4 = pow2_at_least(|c| sweep_c2_ok(c1_4, c, a, positions, target_weight));
    let c2_gen = pow2_at_least(|c| sweep_c2_ok(c1_4, c, a, positions, 1.0 - 1e-12));
    let tiny = 1e-12f64.ln();
    let c1_5 = pow2_at_least(|c| ((positions + 1) as f64).ln() - c <= tiny);
    let c_shuffle = pow2_at_least(|c| 2.0 * ((positions + 1) as f64).ln() - 2.0 * c <= tiny);
    let c_shift = pow2_at_least(|c| shift_log_off(c, a, positions) <= 1e-18f64.ln());
    let m = code_width(k) as f64;
    let recov_c = pow2_at_least(|c| c > 2.0 * 6f64.sqrt() * (2.0 * m + 1.0).sqrt());
    let eps_3 = theta(1.0, a).sin().min(1e-2) / 2.0;
    let pos_gap = min_pos_gap(a, positions);
    let report = SelectReport {
        delta_min: delta,
        min_pos_gap: pos_gap,
        precision_ratio: pos_gap / (c1_4 * f64::EPSILON),
        c2_minimal: !sweep_c2_ok(c1_4, c2_4 / 2.0, a, positions, target_weight),
    };
    let params = ConstructionParams {
        a,
        c1_4,
        c2_4,
        c1_5,
        c3_4: 2.0 * (m + 1.0),
        eps_3,
        c0_gen: 12.0,
        eps_q: 1.0,
        n_max,
        c2_gen,
        c_shift,
        c_shuffle,
        recov_eps: 1.0 / 32.0,
        recov_c,
        attn,
    };
    (params, report)
}
