use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{certificate, Certificate, Rho, StabilityTarget};
use crate::error::{input_err, Error, Result};
use crate::kernels::KernelInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolatedCondition {
    /// `‖a‖² ≥ ν` but `k(a,a) > ‖a‖²`.
    ThetaContractive,
    /// `‖a‖² < ν` but `k(a,a) > s`.
    ThetaBounded,
    /// `‖a−b‖² ≥ ν` but `h(a,b) > ‖a−b‖²`.
    DeltaContractive,
    /// `‖a−b‖² < ν` but `h(a,b) > s`.
    DeltaBounded,
}

/// A sampled point (or pair) violating the kernel viability conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityWitness {
    pub points: Vec<Vec<f64>>,
    pub violated_condition: ViolatedCondition,
    /// Amount by which the left-hand side exceeds its bound; always `> 0`.
    pub margin: f64,
    /// The `ν` the sample was tested against.
    pub nu: f64,
    /// The `s` the sample was tested against (`∞` when not checked).
    pub s: f64,
}

/// Searches for a violation of the viability conditions behind `target`.
///
/// Members are tested against the `(ν, s)` certificate of their own closed
/// form. Non-members (and unsupported structures) are tested against
/// `ν = ρ` with the bounded condition unchecked, so that a returned witness
/// with a finite `ρ` genuinely disproves membership; for `ρ = ∞` the
/// fallback is `ν = radius²/4`.
///
/// Points are drawn with uniformly random directions and radii mixed between
/// uniform on `[0, radius]` and log-uniform on `[1e−6·radius, radius]`. For
/// δ targets the second point is `b = a + d` with `d` drawn the same way.
/// Absence of a witness is evidence only.
pub fn numeric_falsifier(
    kernel: &KernelInstance,
    target: StabilityTarget,
    sample_count: usize,
    radius: f64,
    seed: u64,
) -> Result<Option<ViabilityWitness>> {
    let rho = match target.rho() {
        Some(r) => r,
        None => return input_err("the falsifier needs a constrained stability target"),
    };
    if sample_count == 0 {
        return input_err("sample_count must be >= 1");
    }
    if !(radius.is_finite() && radius > 0.0) {
        return input_err(format!("radius must be finite and > 0, got {radius}"));
    }

    let claimed = match certificate(kernel.structure(), kernel.eta().as_slice(), target) {
        Ok(c) => c,
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let cert = claimed.unwrap_or(match rho {
        Rho::Finite(r) => Certificate {
            nu: r,
            s: f64::INFINITY,
        },
        Rho::Infinite => Certificate {
            nu: 0.25 * radius * radius,
            s: f64::INFINITY,
        },
    });

    let delta = matches!(target, StabilityTarget::DeltaViable(_));
    let dim = kernel.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for i in 0..sample_count {
        let a = sample_point(&mut rng, dim, radius, i % 2 == 0);
        let witness = if delta {
            let d = sample_point(&mut rng, dim, radius, i % 4 < 2);
            let b: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + y).collect();
            let kaa = kernel.eval_unchecked(&a, &a);
            let kbb = kernel.eval_unchecked(&b, &b);
            let h = kaa - 2.0 * kernel.eval_unchecked(&a, &b) + kbb;
            let dist2: f64 = d.iter().map(|x| x * x).sum();
            let tol = 1e-12 * (1.0 + kaa.abs() + kbb.abs() + dist2);
            check(h, dist2, &cert, tol).map(|(cond, margin)| {
                let cond = if cond {
                    ViolatedCondition::DeltaContractive
                } else {
                    ViolatedCondition::DeltaBounded
                };
                (vec![a, b], cond, margin)
            })
        } else {
            let kaa = kernel.eval_unchecked(&a, &a);
            let norm2: f64 = a.iter().map(|x| x * x).sum();
            let tol = 1e-12 * (1.0 + kaa.abs() + norm2);
            check(kaa, norm2, &cert, tol).map(|(cond, margin)| {
                let cond = if cond {
                    ViolatedCondition::ThetaContractive
                } else {
                    ViolatedCondition::ThetaBounded
                };
                (vec![a], cond, margin)
            })
        };
        if let Some((points, violated_condition, margin)) = witness {
            return Ok(Some(ViabilityWitness {
                points,
                violated_condition,
                margin,
                nu: cert.nu,
                s: cert.s,
            }));
        }
    }
    Ok(None)
}

/// Returns `(is_contractive_condition, margin)` on violation.
fn check(lhs: f64, norm2: f64, cert: &Certificate, tol: f64) -> Option<(bool, f64)> {
    if norm2 >= cert.nu {
        let margin = lhs - norm2;
        (margin > tol).then_some((true, margin))
    } else {
        let margin = lhs - cert.s;
        (margin > tol).then_some((false, margin))
    }
}

fn sample_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64, uniform_radius: bool) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = if uniform_radius {
        radius * rng.gen::<f64>()
    } else {
        radius * 10f64.powf(-6.0 * rng.gen::<f64>())
    };
    for x in &mut dir {
        *x *= r / norm;
    }
    dir
}
