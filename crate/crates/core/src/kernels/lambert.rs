//! Principal branch of the Lambert W function on the real line.

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
const BRANCH_TOL: f64 = 1e-15;

/// Principal branch `W₀(x)` for `x ≥ −1/e`, i.e. the solution `w ≥ −1` of
/// `w·eʷ = x`.
///
/// Halley iteration, started from `log(1 + x)` for `x ≥ 0` and from the
/// branch-point series `−1 + p − p²/3 + 11p³/72`, `p = √(2(ex + 1))`, below 0.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Input("lambert_w0 of NaN".into()));
    }
    if x < -INV_E - BRANCH_TOL {
        return Err(Error::Input(format!("lambert_w0 domain is x >= -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    // Distance from the branch point, computed with the split constant so
    // that x = -1/e gives exactly 0.
    let q = x + INV_E;
    if q <= 0.0 {
        return Ok(-1.0);
    }

    let mut w = if x < 0.0 {
        let p = (2.0 * std::f64::consts::E * q).sqrt();
        if p < 1e-3 {
            // The series is already exact to round-off this close to -1/e,
            // where Halley's update is ill-conditioned.
            return Ok(-1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p);
        }
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < f64::EPSILON {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}
