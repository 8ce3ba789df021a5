//! Maps from unconstrained search coordinates onto viability sets.
//!
//! Every map sends `ℝ^d` into the target set and covers the interior of its
//! closed form (with `τ > 0` and positive scales). Coordinates pass through
//! `exp` for positive quantities and a logistic `s(x) ∈ (0,1)` for budget
//! fractions; both clamp their argument to `[−30, 30]`.
//!
//! | structure / target        | image                                                  |
//! |---------------------------|--------------------------------------------------------|
//! | any, unconstrained or ∞   | `η = exp(x)`                                            |
//! | affine, Θ^ρ               | `τ = s(x₀)`, `σ = ρ(1−τ)s(x₁)` (`σ = 0` at ρ = 0)       |
//! | affine, Δ^ρ               | `τ = s(x₀)`, `σ = exp(x₁)`                              |
//! | Gaussian/Matérn, Θ^ρ      | `τ + σ = ρ s(x₀)` split by `s(x₁)`, `γ = exp(x₂)`       |
//! | Gaussian, Δ⁰              | `(τ, γ, σ) = (u/(2γ), γ, σ)`, `u = s(x₀)`               |
//! | Gaussian, Δ^ρ, ρ finite   | `τ = u ρ / (2(1 − e^{−γρ}))`                            |
//! | Matérn, Δ^ρ               | `τ = u max(1/(3γ²), ρ/4 − σ)`                           |
//! | NARX fading, Θ^ρ          | `τ = u ρ / π(ξ, p)`                                     |
//! | NARX fading, Δ^ρ          | `τ = u max(1/(2γπ(ξ,p)), ρ/(4π(ξ,p)))`                  |
//! | feature Gaussian, Θ^ρ     | `τ + σ = s(x₀)` split by `s(x₁)`, `γ = exp(x₂)`         |
//! | sum                       | weights `= s(x₀)·softmax(x₁..x_q)`, children recursive  |
//! | product                   | left at the same target, right factor in `Θ¹`           |

use super::{infeasible_reason, Rho, StabilityTarget};
use crate::error::{Error, Result};
use crate::kernels::{forgetting_sum, Hyperparameters, KernelStructure};

const CLAMP: f64 = 30.0;
/// Relative shrink applied where membership is decided by a transcendental
/// boundary, so that round-off cannot push an image point outside the set.
const BOUNDARY_SHRINK: f64 = 1.0 - 1e-7;

fn pos(x: f64) -> f64 {
    x.clamp(-CLAMP, CLAMP).exp()
}

fn unit(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-CLAMP, CLAMP)).exp())
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Free(usize),
    AffineTheta(Rho),
    AffineDelta,
    StationaryTheta(f64),
    GaussianDelta(f64),
    MaternDelta(f64),
    NarxTheta { rho: f64, order: usize, window: usize },
    NarxDelta { rho: f64, order: usize, window: usize },
    FeatureTheta,
    Sum(Vec<Node>),
    Product(Box<Node>, Box<Node>),
}

impl Node {
    fn dim(&self) -> usize {
        match self {
            Node::Free(n) => *n,
            Node::AffineTheta(rho) => {
                if rho.is_zero() {
                    1
                } else {
                    2
                }
            }
            Node::AffineDelta => 2,
            Node::StationaryTheta(_)
            | Node::GaussianDelta(_)
            | Node::MaternDelta(_)
            | Node::NarxTheta { .. }
            | Node::NarxDelta { .. }
            | Node::FeatureTheta => 3,
            Node::Sum(children) => 1 + children.len() + children.iter().map(Node::dim).sum::<usize>(),
            Node::Product(l, r) => l.dim() + r.dim(),
        }
    }

    /// Appends the image of `x` (exactly `self.dim()` coordinates) to `out`.
    fn push_eta(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            Node::Free(_) => out.extend(x.iter().map(|&v| pos(v))),
            Node::AffineTheta(rho) => {
                let tau = unit(x[0]);
                let sigma = match rho {
                    Rho::Finite(r) if *r == 0.0 => 0.0,
                    Rho::Finite(r) => r * (1.0 - tau) * unit(x[1]),
                    Rho::Infinite => pos(x[1]),
                };
                out.extend([tau, sigma]);
            }
            Node::AffineDelta => out.extend([unit(x[0]), pos(x[1])]),
            Node::StationaryTheta(_) | Node::FeatureTheta => {
                let budget = match self {
                    Node::StationaryTheta(rho) => *rho,
                    _ => 1.0,
                };
                let total = budget * unit(x[0]);
                let frac = unit(x[1]);
                out.extend([total * frac, pos(x[2]), total * (1.0 - frac)]);
            }
            Node::GaussianDelta(rho) => {
                let (u, gamma, sigma) = (unit(x[0]), pos(x[1]), pos(x[2]));
                let tau_max = if *rho == 0.0 {
                    0.5 / gamma
                } else {
                    // largest τ with g(ρ) = 2τ(1 − e^{−γρ}) − ρ ≤ 0
                    BOUNDARY_SHRINK * rho / (-2.0 * (-gamma * rho).exp_m1())
                };
                out.extend([u * tau_max, gamma, sigma]);
            }
            Node::MaternDelta(rho) => {
                let (u, gamma, sigma) = (unit(x[0]), pos(x[1]), pos(x[2]));
                let tau_max = (1.0 / (3.0 * gamma * gamma)).max(rho / 4.0 - sigma);
                out.extend([u * tau_max, gamma, sigma]);
            }
            Node::NarxTheta { rho, order, window } => {
                let (u, gamma, xi) = (unit(x[0]), pos(x[1]), pos(x[2]));
                let pi = forgetting_sum(xi, *order, *window);
                out.extend([u * rho / pi, gamma, xi]);
            }
            Node::NarxDelta { rho, order, window } => {
                let (u, gamma, xi) = (unit(x[0]), pos(x[1]), pos(x[2]));
                let pi = forgetting_sum(xi, *order, *window);
                let tau_max = (0.5 / (gamma * pi)).max(rho / (4.0 * pi));
                out.extend([u * tau_max, gamma, xi]);
            }
            Node::Sum(children) => {
                let q = children.len();
                let total = unit(x[0]);
                let logits = &x[1..=q];
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|l| (l - top).max(-2.0 * CLAMP).exp()).collect();
                let z: f64 = w.iter().sum();
                out.extend(w.iter().map(|wi| total * wi / z));
                let mut offset = 1 + q;
                for child in children {
                    let d = child.dim();
                    child.push_eta(&x[offset..offset + d], out);
                    offset += d;
                }
            }
            Node::Product(l, r) => {
                let dl = l.dim();
                l.push_eta(&x[..dl], out);
                r.push_eta(&x[dl..], out);
            }
        }
    }
}

/// A map from unconstrained coordinates onto a viability set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleMap {
    structure: KernelStructure,
    target: StabilityTarget,
    node: Node,
}

impl FeasibleMap {
    /// Number of search coordinates.
    pub fn dim(&self) -> usize {
        self.node.dim()
    }

    pub fn structure(&self) -> &KernelStructure {
        &self.structure
    }

    pub fn target(&self) -> StabilityTarget {
        self.target
    }

    /// Image of `x`; panics if `x.len() != self.dim()`.
    pub fn to_eta(&self, x: &[f64]) -> Hyperparameters {
        assert_eq!(x.len(), self.dim(), "coordinate count");
        let mut out = Vec::with_capacity(self.structure.arity());
        self.node.push_eta(x, &mut out);
        Hyperparameters::new(out).expect("maps produce finite nonnegative values")
    }
}

/// Builds the feasible map of `(structure, target)`.
///
/// Fails with [`Error::Infeasible`] when the viability set is empty (or only
/// holds the trivial zero kernel), and with [`Error::Unsupported`] when no
/// closed form is implemented.
pub fn feasible_parameterization(structure: &KernelStructure, target: StabilityTarget) -> Result<FeasibleMap> {
    structure.validate()?;
    let node = build(structure, target)?;
    Ok(FeasibleMap {
        structure: structure.clone(),
        target,
        node,
    })
}

fn build(structure: &KernelStructure, target: StabilityTarget) -> Result<Node> {
    use KernelStructure as K;
    if let Some(reason) = infeasible_reason(structure, target) {
        return Err(Error::Infeasible(format!(
            "{} cannot meet target {target}: {reason}",
            structure.name()
        )));
    }
    let unsupported = || {
        Err(Error::Unsupported(format!(
            "no viability set is implemented for {} with target {target}",
            structure.name()
        )))
    };
    Ok(match (structure, target) {
        (K::Sum { children }, t) if t.is_constrained() => {
            Node::Sum(children.iter().map(|c| build(c, t)).collect::<Result<_>>()?)
        }
        (K::ProductWithStationary { left, right }, StabilityTarget::Viable(rho)) => Node::Product(
            Box::new(build(left, StabilityTarget::Viable(rho))?),
            Box::new(build(right, StabilityTarget::Viable(Rho::Finite(1.0)))?),
        ),
        (K::ProductWithStationary { .. } | K::FeatureGaussian, StabilityTarget::DeltaViable(_)) => {
            return unsupported()
        }
        (K::FeatureGaussian, StabilityTarget::Viable(_)) => Node::FeatureTheta,
        (K::LinearAffine, StabilityTarget::Viable(rho)) => Node::AffineTheta(rho),
        (K::LinearAffine, StabilityTarget::DeltaViable(_)) => Node::AffineDelta,
        (s, StabilityTarget::Unconstrained) => Node::Free(s.arity()),
        (s, StabilityTarget::Viable(Rho::Infinite) | StabilityTarget::DeltaViable(Rho::Infinite))
            if s.is_stationary() =>
        {
            Node::Free(s.arity())
        }
        (K::Gaussian | K::Matern32, StabilityTarget::Viable(Rho::Finite(r))) => Node::StationaryTheta(r),
        (K::NarxFading { order, window }, StabilityTarget::Viable(Rho::Finite(r))) => Node::NarxTheta {
            rho: r,
            order: *order,
            window: *window,
        },
        (K::Gaussian, StabilityTarget::DeltaViable(Rho::Finite(r))) => Node::GaussianDelta(r),
        (K::Matern32, StabilityTarget::DeltaViable(Rho::Finite(r))) => Node::MaternDelta(r),
        (K::NarxFading { order, window }, StabilityTarget::DeltaViable(Rho::Finite(r))) => Node::NarxDelta {
            rho: r,
            order: *order,
            window: *window,
        },
        _ => return unsupported(),
    })
}
