//! The recovering function: a ReLU staircase that snaps attention-smeared
//! values in `[−2/5, 2/5]`, `[1/2, 6/5]` and `[4/3, 2]` back to 0, 1 and 2.

use super::ConstructError;

/// Lower threshold of the first step.
pub(crate) const T1: f64 = 9.0 / 20.0;
/// Lower threshold of the second step.
pub(crate) const T2: f64 = 19.0 / 15.0;

pub(crate) fn check_eps(eps: f64) -> Result<(), ConstructError> {
    if eps > 0.0 && eps <= 1.0 / 20.0 {
        Ok(())
    } else {
        Err(ConstructError::Params(format!("recovering-function eps = {eps} must lie in (0, 1/20]")))
    }
}

/// The four ramp offsets `(β₁, β₂, β₃, β₄)` applied to `y/ε`.
pub(crate) fn ramp_offsets(eps: f64) -> [f64; 4] {
    let b1 = -T1 / eps;
    let b3 = -T2 / eps;
    [b1, b1 - 1.0, b3, b3 - 1.0]
}

/// `[y/ε + β₁]₊ − [y/ε + β₂]₊ + [y/ε + β₃]₊ − [y/ε + β₄]₊`.
///
/// Equals 0 for `y ≤ 9/20`, 1 on `[9/20 + ε, 19/15]`, 2 for `y ≥ 19/15 + ε`
/// and ramps linearly in between.
pub fn recov(y: f64, eps: f64) -> Result<f64, ConstructError> {
    check_eps(eps)?;
    let z = y / eps;
    let [b1, _, b3, _] = ramp_offsets(eps);
    let r = |v: f64| v.max(0.0);
    let a1 = z + b1;
    let a3 = z + b3;
    Ok(r(a1) - r(a1 - 1.0) + r(a3) - r(a3 - 1.0))
}
