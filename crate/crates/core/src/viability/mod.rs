//! ρ-viability (`Θ^ρ_k`) and ρ-δviability (`Δ^ρ_k`) sets of the supported
//! kernel structures.
//!
//! Membership is decided by closed forms. Internally every closed form
//! produces a *certificate* `(ν, s)` for the kernel conditions
//!
//! ```text
//! Θ:  ‖a‖² ≥ ν ⇒ k(a,a) ≤ ‖a‖²,        ‖a‖² < ν ⇒ k(a,a) ≤ s
//! Δ:  ‖a−b‖² ≥ ν ⇒ h(a,b) ≤ ‖a−b‖²,    ‖a−b‖² < ν ⇒ h(a,b) ≤ s
//! ```
//!
//! with `ν ≤ ρ`; a hyperparameter is a member exactly when a certificate
//! exists. The [`numeric_falsifier`] replays those certificates on sampled
//! points.
//!
//! For `Sum` and `ProductWithStationary` only sufficient inclusions are
//! known, so `false` means "not provably viable".

mod falsifier;
mod parameterization;

pub use falsifier::{numeric_falsifier, ViabilityWitness, ViolatedCondition};
pub use parameterization::{feasible_parameterization, FeasibleMap};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::{forgetting_sum, lambert_w0, split_eta, stationary_peak, validate_eta, KernelStructure};

/// Extended nonnegative real `ρ ∈ [0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    Finite(f64),
    Infinite,
}

impl Rho {
    pub const ZERO: Rho = Rho::Finite(0.0);

    pub fn finite(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return input_err(format!("rho must be a finite value >= 0, got {value}"));
        }
        Ok(Rho::Finite(value))
    }

    pub fn is_zero(self) -> bool {
        self == Rho::ZERO
    }

    pub fn is_infinite(self) -> bool {
        self == Rho::Infinite
    }

    /// `x ≤ ρ`.
    pub fn bounds(self, x: f64) -> bool {
        match self {
            Rho::Finite(r) => x <= r,
            Rho::Infinite => true,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Rho::Finite(r) => r,
            Rho::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho::Finite(r) => write!(f, "{r}"),
            Rho::Infinite => f.write_str("inf"),
        }
    }
}

/// Which feasibility set `Ω_k` hyperparameter selection is restricted to.
///
/// `Viable(0)` is the ISS target and `Viable(∞)` the BIBS target;
/// `DeltaViable` likewise encodes δISS and δBIBS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StabilityTarget {
    Unconstrained,
    Viable(Rho),
    DeltaViable(Rho),
}

impl StabilityTarget {
    pub const ISS: Self = Self::Viable(Rho::ZERO);
    pub const BIBS: Self = Self::Viable(Rho::Infinite);
    pub const DELTA_ISS: Self = Self::DeltaViable(Rho::ZERO);
    pub const DELTA_BIBS: Self = Self::DeltaViable(Rho::Infinite);

    pub fn rho(self) -> Option<Rho> {
        match self {
            Self::Unconstrained => None,
            Self::Viable(r) | Self::DeltaViable(r) => Some(r),
        }
    }

    pub fn is_constrained(self) -> bool {
        !matches!(self, Self::Unconstrained)
    }
}

impl fmt::Display for StabilityTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Unconstrained => f.write_str("none"),
            Self::Viable(Rho::Infinite) => f.write_str("bibs"),
            Self::DeltaViable(Rho::Infinite) => f.write_str("dbibs"),
            Self::Viable(r) if r.is_zero() => f.write_str("iss"),
            Self::DeltaViable(r) if r.is_zero() => f.write_str("diss"),
            Self::Viable(r) => write!(f, "viable({r})"),
            Self::DeltaViable(r) => write!(f, "dviable({r})"),
        }
    }
}

fn parse_rho(s: &str) -> Result<Rho> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(Rho::Infinite),
        other => {
            let v: f64 = other
                .parse()
                .map_err(|_| Error::Input(format!("cannot parse rho from {other:?}")))?;
            if v.is_infinite() && v > 0.0 {
                Ok(Rho::Infinite)
            } else {
                Rho::finite(v)
            }
        }
    }
}

impl FromStr for StabilityTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('('))
                .and_then(|rest| rest.strip_suffix(')'))
        };
        match s {
            "none" | "unconstrained" => Ok(Self::Unconstrained),
            "bibs" => Ok(Self::BIBS),
            "iss" => Ok(Self::ISS),
            "dbibs" => Ok(Self::DELTA_BIBS),
            "diss" => Ok(Self::DELTA_ISS),
            _ => {
                if let Some(r) = inner("dviable") {
                    Ok(Self::DeltaViable(parse_rho(r)?))
                } else if let Some(r) = inner("viable") {
                    Ok(Self::Viable(parse_rho(r)?))
                } else {
                    input_err(format!(
                        "unknown stability target {s:?}; expected none, bibs, iss, viable(rho), dbibs, diss or dviable(rho)"
                    ))
                }
            }
        }
    }
}

impl TryFrom<String> for StabilityTarget {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StabilityTarget> for String {
    fn from(t: StabilityTarget) -> String {
        t.to_string()
    }
}

/// `(ν, s)` pair witnessing the kernel conditions for a member `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Certificate {
    pub nu: f64,
    pub s: f64,
}

const STATIONARY_ISS: &str =
    "stationary kernels are never 0-viable unless trivial (no non-trivial stationary kernel is 0-viable)";
const POLYNOMIAL_EMPTY: &str = "polynomial kernels of degree >= 2 have empty viability and delta-viability sets";

/// `v(τ, γ) = 2τ + γ⁻¹ W₀(−2γτ e^{−2γτ})`: the positive root of
/// `g(ζ) = 2τ − 2τ e^{−γζ} − ζ` when `2τγ > 1`, and 0 otherwise.
///
/// A Gaussian kernel with `v(τ, γ) ≤ ρ` belongs to `Δ^ρ`.
pub fn gaussian_delta_radius(tau: f64, gamma: f64) -> f64 {
    let x = 2.0 * tau * gamma;
    if gamma == 0.0 || x <= 1.0 {
        return 0.0;
    }
    // x·e^{−x} underflows to 0 for huge x, where W → 0 and v → 2τ
    let w = lambert_w0(-x * (-x).exp()).expect("argument lies in [-1/e, 0]");
    (2.0 * tau + w / gamma).max(0.0)
}

pub(crate) fn theta_certificate(structure: &KernelStructure, eta: &[f64], rho: Rho) -> Result<Option<Certificate>> {
    use KernelStructure as K;
    Ok(match structure {
        K::LinearAffine => {
            let (tau, sigma) = (eta[0], eta[1]);
            if tau > 1.0 {
                None
            } else if tau == 1.0 {
                // σ ≤ ρ(1 − τ) = 0, also for ρ = ∞
                (sigma == 0.0).then_some(Certificate { nu: 0.0, s: 0.0 })
            } else {
                let member = match rho {
                    Rho::Finite(r) => sigma <= r * (1.0 - tau),
                    Rho::Infinite => true,
                };
                let nu = sigma / (1.0 - tau);
                member.then_some(Certificate {
                    nu,
                    s: tau * nu + sigma,
                })
            }
        }
        K::Polynomial { .. } => None,
        K::Gaussian | K::Matern32 | K::NarxFading { .. } => {
            let peak = stationary_peak(structure, eta).expect("stationary");
            rho.bounds(peak).then_some(Certificate { nu: peak, s: peak })
        }
        K::FeatureGaussian => {
            // k(a,a) = (τ + σ)‖a‖², so the condition is exact for every ρ
            (eta[0] + eta[2] <= 1.0).then_some(Certificate { nu: 0.0, s: 0.0 })
        }
        K::Sum { children } => {
            let q = children.len();
            let refs: Vec<_> = children.iter().collect();
            let parts = split_eta(&refs, &eta[q..]);
            let mut certs = Vec::with_capacity(q);
            for (child, e) in children.iter().zip(parts) {
                certs.push(theta_certificate(child, e, rho)?);
            }
            combine_sum(&eta[..q], certs)
        }
        K::ProductWithStationary { left, right } => {
            let nl = left.arity();
            let peak = stationary_peak(right, &eta[nl..]).expect("validated stationary factor");
            match theta_certificate(left, &eta[..nl], rho)? {
                Some(c) if peak <= 1.0 => Some(Certificate {
                    nu: c.nu,
                    s: c.s * peak,
                }),
                _ => None,
            }
        }
    })
}

fn combine_sum(weights: &[f64], certs: Vec<Option<Certificate>>) -> Option<Certificate> {
    if weights.iter().sum::<f64>() > 1.0 {
        return None;
    }
    let certs: Option<Vec<Certificate>> = certs.into_iter().collect();
    let certs = certs?;
    let nu = certs.iter().map(|c| c.nu).fold(0.0, f64::max);
    let s = certs.iter().map(|c| c.nu.max(c.s)).fold(0.0, f64::max);
    Some(Certificate { nu, s })
}

pub(crate) fn delta_certificate(structure: &KernelStructure, eta: &[f64], rho: Rho) -> Result<Option<Certificate>> {
    use KernelStructure as K;
    const TRIVIAL: Certificate = Certificate { nu: 0.0, s: 0.0 };
    Ok(match structure {
        // h = τ‖a−b‖²: contractive everywhere iff τ ≤ 1, for every ρ
        K::LinearAffine => (eta[0] <= 1.0).then_some(TRIVIAL),
        K::Polynomial { .. } => None,
        K::Gaussian => {
            let (tau, gamma) = (eta[0], eta[1]);
            if tau == 0.0 || gamma == 0.0 || 2.0 * tau * gamma <= 1.0 {
                Some(TRIVIAL)
            } else if rho.is_zero() {
                None
            } else {
                let v = gaussian_delta_radius(tau, gamma);
                rho.bounds(v).then_some(Certificate { nu: v, s: 2.0 * tau })
            }
        }
        K::Matern32 => {
            let (tau, gamma) = (eta[0], eta[1]);
            if 3.0 * tau * gamma * gamma <= 1.0 {
                Some(TRIVIAL)
            } else {
                stationary_bound(structure, eta, rho)
            }
        }
        K::NarxFading { order, window } => {
            let (tau, gamma, xi) = (eta[0], eta[1], eta[2]);
            if 2.0 * gamma * tau * forgetting_sum(xi, *order, *window) <= 1.0 {
                Some(TRIVIAL)
            } else {
                stationary_bound(structure, eta, rho)
            }
        }
        K::FeatureGaussian | K::ProductWithStationary { .. } => {
            return Err(Error::Unsupported(format!(
                "no delta-viability set is implemented for {}",
                structure.name()
            )))
        }
        K::Sum { children } => {
            let q = children.len();
            let refs: Vec<_> = children.iter().collect();
            let parts = split_eta(&refs, &eta[q..]);
            let mut certs = Vec::with_capacity(q);
            for (child, e) in children.iter().zip(parts) {
                certs.push(delta_certificate(child, e, rho)?);
            }
            combine_sum(&eta[..q], certs)
        }
    })
}

/// `Δ^ρ ⊇ {η : 4k̄(0) ≤ ρ}`, valid for any stationary kernel.
fn stationary_bound(structure: &KernelStructure, eta: &[f64], rho: Rho) -> Option<Certificate> {
    let bound = 4.0 * stationary_peak(structure, eta).expect("stationary");
    if rho.is_infinite() || (!rho.is_zero() && rho.bounds(bound)) {
        Some(Certificate { nu: bound, s: bound })
    } else {
        None
    }
}

/// Is `eta ∈ Θ^ρ_k`?
pub fn theta_membership(structure: &KernelStructure, eta: &[f64], rho: Rho) -> Result<bool> {
    validate_eta(structure, eta)?;
    Ok(theta_certificate(structure, eta, rho)?.is_some())
}

/// Is `eta ∈ Δ^ρ_k`?
pub fn delta_membership(structure: &KernelStructure, eta: &[f64], rho: Rho) -> Result<bool> {
    validate_eta(structure, eta)?;
    Ok(delta_certificate(structure, eta, rho)?.is_some())
}

/// Membership in the set selected by `target`; `Unconstrained` accepts
/// everything in `Φ_k`.
pub fn target_membership(structure: &KernelStructure, eta: &[f64], target: StabilityTarget) -> Result<bool> {
    match target {
        StabilityTarget::Unconstrained => validate_eta(structure, eta).map(|_| true),
        StabilityTarget::Viable(rho) => theta_membership(structure, eta, rho),
        StabilityTarget::DeltaViable(rho) => delta_membership(structure, eta, rho),
    }
}

pub(crate) fn certificate(
    structure: &KernelStructure,
    eta: &[f64],
    target: StabilityTarget,
) -> Result<Option<Certificate>> {
    match target {
        StabilityTarget::Unconstrained => input_err("unconstrained target has no certificate"),
        StabilityTarget::Viable(rho) => theta_certificate(structure, eta, rho),
        StabilityTarget::DeltaViable(rho) => delta_certificate(structure, eta, rho),
    }
}

pub(crate) fn infeasible_reason(structure: &KernelStructure, target: StabilityTarget) -> Option<&'static str> {
    match (structure, target) {
        (KernelStructure::Polynomial { .. }, t) if t.is_constrained() => Some(POLYNOMIAL_EMPTY),
        (s, StabilityTarget::Viable(r)) if s.is_stationary() && r.is_zero() => Some(STATIONARY_ISS),
        _ => None,
    }
}
