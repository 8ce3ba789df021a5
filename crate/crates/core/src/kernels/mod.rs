//! Kernel structures, hyperparameter domains and Gram-matrix assembly.
//!
//! A [`KernelStructure`] is a parametric family `k`; pairing it with a
//! validated [`Hyperparameters`] vector gives one member `k_η`, the
//! [`KernelInstance`]. Hyperparameters are stored in natural scale.
//!
//! Hyperparameter layouts:
//!
//! | structure                 | η                                         |
//! |---------------------------|-------------------------------------------|
//! | `LinearAffine`            | `(τ, σ)`                                  |
//! | `Polynomial { degree }`   | `()` (the degree is part of the structure)|
//! | `Gaussian`, `Matern32`    | `(τ, γ, σ)`                               |
//! | `NarxFading { .. }`       | `(τ, γ, ξ)`, ξ the forgetting rate        |
//! | `FeatureGaussian`         | `(τ, γ, σ)`                               |
//! | `Sum { children }`        | `(w₁..w_q, η₁, .., η_q)`, weights `> 0`   |
//! | `ProductWithStationary`   | `(η_left, η_right)`                       |

mod lambert;

pub use lambert::lambert_w0;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

/// Kernel families supported by the identification pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelStructure {
    /// `k(a,b) = τ aᵀb + σ`.
    LinearAffine,
    /// `k(a,b) = (aᵀb)^degree`, degree ≥ 2.
    Polynomial { degree: u32 },
    /// `k̄(z) = τ exp(−γ‖z‖²) + σ`.
    Gaussian,
    /// `k̄(z) = τ (1 + √3 γ‖z‖) exp(−√3 γ‖z‖) + σ`.
    Matern32,
    /// Fading-memory NARX kernel over sliding windows of length `window`
    /// of a regressor of model order `order`.
    NarxFading { order: usize, window: usize },
    /// Positively weighted sum of child kernels.
    Sum { children: Vec<KernelStructure> },
    /// Product of any kernel with a stationary one.
    ProductWithStationary {
        left: Box<KernelStructure>,
        right: Box<KernelStructure>,
    },
    /// `k(a,b) = Γ(a)ᵀΓ(b) (τ exp(−γ‖a−b‖²) + σ)` with `Γ` the identity.
    ///
    /// Other feature maps must satisfy `‖Γ(a)‖ ≤ ‖a‖` to keep the viability
    /// sets of this structure valid.
    FeatureGaussian,
}

impl KernelStructure {
    /// Number of hyperparameters.
    pub fn arity(&self) -> usize {
        match self {
            Self::LinearAffine => 2,
            Self::Polynomial { .. } => 0,
            Self::Gaussian | Self::Matern32 | Self::FeatureGaussian => 3,
            Self::NarxFading { .. } => 3,
            Self::Sum { children } => children.len() + children.iter().map(Self::arity).sum::<usize>(),
            Self::ProductWithStationary { left, right } => left.arity() + right.arity(),
        }
    }

    /// `k_η(a,b)` depends on `a − b` only.
    pub fn is_stationary(&self) -> bool {
        matches!(self, Self::Gaussian | Self::Matern32 | Self::NarxFading { .. })
    }

    pub fn name(&self) -> String {
        match self {
            Self::LinearAffine => "linear_affine".into(),
            Self::Polynomial { degree } => format!("polynomial(degree={degree})"),
            Self::Gaussian => "gaussian".into(),
            Self::Matern32 => "matern32".into(),
            Self::NarxFading { order, window } => {
                format!("narx_fading(order={order}, window={window})")
            }
            Self::Sum { children } => {
                let names: Vec<_> = children.iter().map(Self::name).collect();
                format!("sum({})", names.join(", "))
            }
            Self::ProductWithStationary { left, right } => {
                format!("product({}, {})", left.name(), right.name())
            }
            Self::FeatureGaussian => "feature_gaussian".into(),
        }
    }

    /// Checks the structural invariants (degree, window range, stationarity
    /// of product factors).
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Polynomial { degree } if *degree < 2 => {
                input_err(format!("polynomial degree must be >= 2, got {degree}"))
            }
            Self::NarxFading { order, window } if *order == 0 || *window == 0 || window > order => input_err(format!(
                "narx_fading window must lie in 1..=order, got window={window}, order={order}"
            )),
            Self::Sum { children } => {
                if children.is_empty() {
                    return input_err("sum kernel needs at least one child");
                }
                children.iter().try_for_each(Self::validate)
            }
            Self::ProductWithStationary { left, right } => {
                if !right.is_stationary() {
                    return input_err(format!(
                        "right factor of a product kernel must be stationary, got {}",
                        right.name()
                    ));
                }
                left.validate()?;
                right.validate()
            }
            _ => Ok(()),
        }
    }

    /// Input dimension forced by the structure, if any.
    fn required_input_dim(&self) -> Option<usize> {
        match self {
            Self::NarxFading { order, .. } => Some(2 * order + 1),
            Self::Sum { children } => children.iter().find_map(Self::required_input_dim),
            Self::ProductWithStationary { left, right } => {
                left.required_input_dim().or_else(|| right.required_input_dim())
            }
            _ => None,
        }
    }
}

/// Hyperparameter vector `η`: finite, nonnegative entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparameters(Vec<f64>);

impl Hyperparameters {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return input_err(format!("hyperparameter {i} must be finite and >= 0, got {v}"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Hyperparameters {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Checks that `eta` belongs to `Φ_k` for `structure` (arity, sign, and the
/// strictly positive sum weights).
pub fn validate_eta(structure: &KernelStructure, eta: &[f64]) -> Result<()> {
    structure.validate()?;
    if eta.len() != structure.arity() {
        return input_err(format!(
            "{} expects {} hyperparameters, got {}",
            structure.name(),
            structure.arity(),
            eta.len()
        ));
    }
    Hyperparameters::new(eta.to_vec())?;
    if let KernelStructure::Sum { children } = structure {
        if let Some(w) = eta[..children.len()].iter().find(|w| **w <= 0.0) {
            return input_err(format!("sum kernel weights must be > 0, got {w}"));
        }
    }
    Ok(())
}

/// Splits a composite hyperparameter slice into per-child slices.
pub(crate) fn split_eta<'a>(children: &[&KernelStructure], eta: &'a [f64]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(children.len());
    let mut offset = 0;
    for child in children {
        let n = child.arity();
        out.push(&eta[offset..offset + n]);
        offset += n;
    }
    out
}

/// `π(ξ, p) = Σ_{t=0}^{m−p} e^{−ξt}`, the peak mass of the fading-memory
/// kernel per unit `τ`.
pub fn forgetting_sum(xi: f64, order: usize, window: usize) -> f64 {
    let terms = (order - window + 1) as f64;
    if xi == 0.0 {
        terms
    } else {
        // (1 − e^{−(m−p+1)ξ}) / (1 − e^{−ξ}), written with expm1 for small ξ
        (-terms * xi).exp_m1() / (-xi).exp_m1()
    }
}

/// `k̄_η(0)` for stationary structures, `None` otherwise.
pub fn stationary_peak(structure: &KernelStructure, eta: &[f64]) -> Option<f64> {
    match structure {
        KernelStructure::Gaussian | KernelStructure::Matern32 => Some(eta[0] + eta[2]),
        KernelStructure::NarxFading { order, window } => Some(eta[0] * forgetting_sum(eta[2], *order, *window)),
        _ => None,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn eval_raw(structure: &KernelStructure, eta: &[f64], a: &[f64], b: &[f64]) -> f64 {
    match structure {
        KernelStructure::LinearAffine => eta[0] * dot(a, b) + eta[1],
        KernelStructure::Polynomial { degree } => dot(a, b).powi(*degree as i32),
        KernelStructure::Gaussian => eta[0] * (-eta[1] * sq_dist(a, b)).exp() + eta[2],
        KernelStructure::Matern32 => {
            let r = SQRT3 * eta[1] * sq_dist(a, b).sqrt();
            eta[0] * (1.0 + r) * (-r).exp() + eta[2]
        }
        KernelStructure::NarxFading { order, window } => {
            let (tau, gamma, xi) = (eta[0], eta[1], eta[2]);
            let (m, p) = (*order, *window);
            // z = (y_1..y_m, u_1..u_{m+1}); window t covers y_{t+1..t+p}, u_{t+1..t+p}
            (0..=m - p)
                .map(|t| {
                    let dy = sq_dist(&a[t..t + p], &b[t..t + p]);
                    let du = sq_dist(&a[m + t..m + t + p], &b[m + t..m + t + p]);
                    (-xi * t as f64 - gamma * (dy + du)).exp()
                })
                .sum::<f64>()
                * tau
        }
        KernelStructure::Sum { children } => {
            let q = children.len();
            let refs: Vec<&KernelStructure> = children.iter().collect();
            let parts = split_eta(&refs, &eta[q..]);
            children
                .iter()
                .zip(parts)
                .zip(&eta[..q])
                .map(|((child, e), w)| w * eval_raw(child, e, a, b))
                .sum()
        }
        KernelStructure::ProductWithStationary { left, right } => {
            let nl = left.arity();
            eval_raw(left, &eta[..nl], a, b) * eval_raw(right, &eta[nl..], a, b)
        }
        KernelStructure::FeatureGaussian => dot(a, b) * (eta[0] * (-eta[1] * sq_dist(a, b)).exp() + eta[2]),
    }
}

/// Serialized form of a kernel: structure, hyperparameters, input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub structure: KernelStructure,
    pub hyperparameters: Vec<f64>,
    pub input_dim: usize,
}

/// A kernel structure with a validated hyperparameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct KernelInstance {
    structure: KernelStructure,
    eta: Hyperparameters,
    input_dim: usize,
}

impl TryFrom<KernelSpec> for KernelInstance {
    type Error = Error;
    fn try_from(spec: KernelSpec) -> Result<Self> {
        Self::new(spec.structure, spec.hyperparameters, spec.input_dim)
    }
}

impl From<KernelInstance> for KernelSpec {
    fn from(k: KernelInstance) -> Self {
        KernelSpec {
            structure: k.structure,
            hyperparameters: k.eta.into_inner(),
            input_dim: k.input_dim,
        }
    }
}

impl KernelInstance {
    pub fn new(structure: KernelStructure, eta: Vec<f64>, input_dim: usize) -> Result<Self> {
        validate_eta(&structure, &eta)?;
        if input_dim == 0 {
            return input_err("kernel input dimension must be positive");
        }
        if let Some(required) = structure.required_input_dim() {
            if required != input_dim {
                return input_err(format!(
                    "{} requires input dimension {required}, got {input_dim}",
                    structure.name()
                ));
            }
        }
        Ok(Self {
            structure,
            eta: Hyperparameters::new(eta)?,
            input_dim,
        })
    }

    pub fn structure(&self) -> &KernelStructure {
        &self.structure
    }

    pub fn eta(&self) -> &Hyperparameters {
        &self.eta
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_dim {
            return input_err(format!(
                "kernel expects vectors of dimension {}, got {}",
                self.input_dim,
                v.len()
            ));
        }
        Ok(())
    }

    /// `k_η(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        eval_raw(&self.structure, self.eta.as_slice(), a, b)
    }

    /// Squared kernel metric `h_η(a,b) = k(a,a) − 2k(a,b) + k(b,b)`.
    pub fn squared_kernel_metric(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        Ok(self.eval(a, a)? - 2.0 * self.eval(a, b)? + self.eval(b, b)?)
    }

    /// Symmetric Gram matrix `K[i,j] = k_η(pᵢ, pⱼ)`.
    pub fn gram_matrix<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return input_err("gram matrix of an empty point set");
        }
        for p in points {
            self.check_dim(p.as_ref())?;
        }
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(points[i].as_ref(), points[j].as_ref());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Cross-kernel matrix `K[i,j] = k_η(aᵢ, bⱼ)`.
    pub fn cross_matrix<P: AsRef<[f64]>, Q: AsRef<[f64]>>(&self, rows: &[P], cols: &[Q]) -> Result<DMatrix<f64>> {
        for p in rows {
            self.check_dim(p.as_ref())?;
        }
        for q in cols {
            self.check_dim(q.as_ref())?;
        }
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval_unchecked(rows[i].as_ref(), cols[j].as_ref())
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn gaussian_diagonal_is_tau_plus_sigma() {
        let k = KernelInstance::new(KernelStructure::Gaussian, vec![2.0, 1.0, 0.5], 5).unwrap();
        let a = [0.3, -1.0, 2.0, 0.0, 4.0];
        assert_eq!(k.eval(&a, &a).unwrap(), 2.5);
    }

    #[test]
    fn linear_affine_orthogonal_is_zero() {
        let k = KernelInstance::new(KernelStructure::LinearAffine, vec![1.0, 0.0], 5).unwrap();
        assert_eq!(k.eval(&unit(5, 0), &unit(5, 1)).unwrap(), 0.0);
    }

    #[test]
    fn matern_at_unit_distance() {
        let k = KernelInstance::new(KernelStructure::Matern32, vec![1.0, 1.0, 0.0], 5).unwrap();
        // (1 + √3) e^{−√3}, evaluated independently with mpmath
        let expected = 0.483_357_724_596_507_65;
        let v = k.eval(&unit(5, 0), &[0.0; 5]).unwrap();
        assert!((v - expected).abs() < 1e-15, "{v}");
    }

    #[test]
    fn gaussian_metric_at_unit_distance() {
        let k = KernelInstance::new(KernelStructure::Gaussian, vec![1.0, 1.0, 0.0], 3).unwrap();
        let h = k.squared_kernel_metric(&[1.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert!((h - (2.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
        assert!((h - 1.264_241_117_657_115_4).abs() < 1e-15);
    }

    #[test]
    fn affine_metric_drops_offset() {
        let k = KernelInstance::new(KernelStructure::LinearAffine, vec![1.0, 5.0], 3).unwrap();
        let (a, b) = ([1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]);
        let h = k.squared_kernel_metric(&a, &b).unwrap();
        assert!((h - sq_dist(&a, &b)).abs() < 1e-12);
        assert_eq!(k.squared_kernel_metric(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn far_points_give_identity_gram() {
        let k = KernelInstance::new(KernelStructure::Gaussian, vec![1.0, 1.0, 0.0], 2).unwrap();
        let pts = [vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        let g = k.gram_matrix(&pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < (-99.0f64).exp());
            }
        }
    }

    #[test]
    fn single_point_gram() {
        let k = KernelInstance::new(KernelStructure::Gaussian, vec![0.7, 3.0, 0.2], 2).unwrap();
        let g = k.gram_matrix(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert!((g[(0, 0)] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let k = KernelInstance::new(KernelStructure::Gaussian, vec![1.0, 1.0, 0.0], 3).unwrap();
        assert!(matches!(k.eval(&[0.0; 3], &[0.0; 2]), Err(Error::Input(_))));
        assert!(matches!(
            k.gram_matrix(&[vec![0.0; 3], vec![0.0; 4]]),
            Err(Error::Input(_))
        ));
        assert!(k.gram_matrix::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn hyperparameter_domain() {
        assert!(KernelInstance::new(KernelStructure::Gaussian, vec![1.0, -1.0, 0.0], 3).is_err());
        assert!(KernelInstance::new(KernelStructure::Gaussian, vec![1.0, 1.0], 3).is_err());
        assert!(KernelInstance::new(KernelStructure::Gaussian, vec![1.0, f64::NAN, 0.0], 3).is_err());
        assert!(KernelInstance::new(KernelStructure::Polynomial { degree: 1 }, vec![], 3).is_err());
        assert!(KernelInstance::new(
            KernelStructure::NarxFading { order: 2, window: 3 },
            vec![1.0, 1.0, 0.0],
            5
        )
        .is_err());
        assert!(KernelInstance::new(
            KernelStructure::NarxFading { order: 2, window: 1 },
            vec![1.0, 1.0, 0.0],
            4
        )
        .is_err());
        let product = KernelStructure::ProductWithStationary {
            left: Box::new(KernelStructure::Gaussian),
            right: Box::new(KernelStructure::LinearAffine),
        };
        assert!(KernelInstance::new(product, vec![1.0; 5], 3).is_err());
        let sum = KernelStructure::Sum {
            children: vec![KernelStructure::Gaussian, KernelStructure::LinearAffine],
        };
        assert!(KernelInstance::new(sum.clone(), vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0], 3).is_err());
        assert!(KernelInstance::new(sum, vec![0.5, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0], 3).is_ok());
    }

    #[test]
    fn forgetting_sum_closed_form_matches_series() {
        for &(m, p) in &[(1, 1), (2, 1), (2, 2), (5, 2), (10, 1)] {
            for &xi in &[0.0, 1e-9, 0.1, 1.0, 7.5] {
                let direct: f64 = (0..=m - p).map(|t| (-xi * t as f64).exp()).sum();
                let closed = forgetting_sum(xi, m, p);
                assert!((direct - closed).abs() < 1e-12 * direct, "m={m} p={p} xi={xi}");
            }
        }
    }

    #[test]
    fn narx_fading_is_stationary_with_known_peak() {
        let s = KernelStructure::NarxFading { order: 3, window: 2 };
        let k = KernelInstance::new(s.clone(), vec![0.4, 0.8, 0.3], 7).unwrap();
        let a = [0.1, 0.2, -0.3, 1.0, 0.5, -0.5, 2.0];
        let peak = stationary_peak(&s, k.eta().as_slice()).unwrap();
        assert!((k.eval(&a, &a).unwrap() - peak).abs() < 1e-14);
        // shift invariance
        let b = [1.0, 0.0, 0.3, -1.0, 0.25, 0.5, 0.0];
        let shift = [0.7, -0.2, 1.1, 0.0, 3.0, -2.0, 0.4];
        let a2: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let b2: Vec<f64> = b.iter().zip(&shift).map(|(x, s)| x + s).collect();
        assert!((k.eval(&a, &b).unwrap() - k.eval(&a2, &b2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn narx_fading_ignores_current_input() {
        // u_{m+1} is outside every window
        let k = KernelInstance::new(
            KernelStructure::NarxFading { order: 2, window: 1 },
            vec![1.0, 1.0, 0.5],
            5,
        )
        .unwrap();
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut b = a;
        b[4] = 9.0;
        assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&a, &a).unwrap());
    }

    #[test]
    fn spec_round_trip_through_toml_like_serde() {
        let k = KernelInstance::new(
            KernelStructure::ProductWithStationary {
                left: Box::new(KernelStructure::LinearAffine),
                right: Box::new(KernelStructure::Gaussian),
            },
            vec![1.0, 0.0, 0.5, 2.0, 0.1],
            5,
        )
        .unwrap();
        let spec: KernelSpec = k.clone().into();
        let back = KernelInstance::try_from(spec).unwrap();
        assert_eq!(back, k);
    }
}
