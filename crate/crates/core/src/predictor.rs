//! The learned predictor `f(z) = Σᵢ cᵢ k(z, z̄ᵢ)`, one-step prediction,
//! free-run simulation and empirical stability probes.
//!
//! Sequences are 0-based: the regressor for `y_t`, `t ≥ m`, is
//! `(y_{t−m..t−1}, u_{t−m..t})`. The first `m` entries of every predicted or
//! simulated sequence are the seed outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::{KernelInstance, KernelStructure};
use crate::model_selection::{select_hyperparameters, SelectionConfig, SelectionResult};
use crate::solver::{regressor, solve_constrained, FitProblem, FitReport, RegressionData};
use crate::viability::StabilityTarget;

/// Simulated outputs beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorModel {
    model_order: usize,
    stability_tag: StabilityTarget,
    kernel: KernelInstance,
    coefficients: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl PredictorModel {
    pub fn new(
        model_order: usize,
        kernel: KernelInstance,
        centers: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        stability_tag: StabilityTarget,
    ) -> Result<Self> {
        let model = Self {
            model_order,
            stability_tag,
            kernel,
            coefficients,
            centers,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the invariants; used after deserialization as well.
    pub fn validate(&self) -> Result<()> {
        let m = self.model_order;
        if m == 0 {
            return input_err("model order must be >= 1");
        }
        if self.centers.is_empty() {
            return input_err("a predictor needs at least one center");
        }
        if self.centers.len() != self.coefficients.len() {
            return input_err(format!(
                "{} centers but {} coefficients",
                self.centers.len(),
                self.coefficients.len()
            ));
        }
        let dim = 2 * m + 1;
        if self.kernel.input_dim() != dim {
            return input_err(format!(
                "kernel input dimension {} does not match 2m+1 = {dim}",
                self.kernel.input_dim()
            ));
        }
        if let Some(i) = self.centers.iter().position(|c| c.len() != dim) {
            return input_err(format!(
                "center {i} has dimension {}, expected {dim}",
                self.centers[i].len()
            ));
        }
        if self
            .coefficients
            .iter()
            .chain(self.centers.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return input_err("model contains a non-finite center or coefficient");
        }
        Ok(())
    }

    pub fn model_order(&self) -> usize {
        self.model_order
    }

    pub fn kernel(&self) -> &KernelInstance {
        &self.kernel
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn stability_tag(&self) -> StabilityTarget {
        self.stability_tag
    }

    /// `‖f‖² = cᵀKc` over the centers.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let k = self.kernel.gram_matrix(&self.centers)?;
        let c = nalgebra::DVector::from_column_slice(&self.coefficients);
        Ok(c.dot(&(k * &c)).max(0.0))
    }

    fn f(&self, z: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(center, c)| c * self.kernel.eval_unchecked(z, center))
            .sum()
    }
}

/// `f(z) = Σᵢ cᵢ k(z, z̄ᵢ)`.
pub fn evaluate_f(model: &PredictorModel, z: &[f64]) -> Result<f64> {
    let dim = 2 * model.model_order + 1;
    if z.len() != dim {
        return input_err(format!("regressor has dimension {}, expected {dim}", z.len()));
    }
    Ok(model.f(z))
}

fn check_lengths(model: &PredictorModel, u: &[f64], y: &[f64]) -> Result<()> {
    if u.len() != y.len() {
        return input_err(format!("input has {} samples but output has {}", u.len(), y.len()));
    }
    if u.len() <= model.model_order {
        return input_err(format!(
            "sequence too short: n = {} <= m = {}",
            u.len(),
            model.model_order
        ));
    }
    Ok(())
}

/// `ŷ^pre_t = f(y_{t−m..t−1}, u_{t−m..t})` for `t ≥ m`, and `y_t` before.
pub fn one_step_predict(model: &PredictorModel, u: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(model, u, y)?;
    let m = model.model_order;
    let mut out = y[..m].to_vec();
    out.extend((m..u.len()).map(|t| model.f(&regressor(&y[t - m..t], &u[t - m..=t]))));
    Ok(out)
}

/// Iterates the predictor on its own outputs from `y_seed`.
///
/// Fails with [`Error::Divergence`] at the first index whose value is
/// non-finite or exceeds [`DIVERGENCE_LIMIT`] in magnitude.
pub fn simulate(model: &PredictorModel, u: &[f64], y_seed: &[f64]) -> Result<Vec<f64>> {
    let m = model.model_order;
    if y_seed.len() != m {
        return input_err(format!("seed has {} outputs, expected m = {m}", y_seed.len()));
    }
    if u.len() <= m {
        return input_err(format!("input too short: n = {} <= m = {m}", u.len()));
    }
    let mut y = y_seed.to_vec();
    y.reserve(u.len() - m);
    let mut z = vec![0.0; 2 * m + 1];
    for t in m..u.len() {
        z[..m].copy_from_slice(&y[t - m..t]);
        z[m..].copy_from_slice(&u[t - m..=t]);
        let v = model.f(&z);
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { index: t, value: v });
        }
        y.push(v);
    }
    Ok(y)
}

/// Mean absolute prediction and simulation errors over `t ≥ m`.
pub fn metrics(truth: &[f64], predicted: &[f64], simulated: &[f64], m: usize) -> Result<(f64, f64)> {
    if truth.len() != predicted.len() || truth.len() != simulated.len() {
        return input_err("metric sequences must have equal lengths");
    }
    if truth.len() <= m {
        return input_err(format!("sequence too short: n = {} <= m = {m}", truth.len()));
    }
    let mae = |est: &[f64]| {
        truth[m..]
            .iter()
            .zip(&est[m..])
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (truth.len() - m) as f64
    };
    Ok((mae(predicted), mae(simulated)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub predicted: Vec<f64>,
    /// `None` when the free run diverged.
    pub simulated: Option<Vec<f64>>,
    pub q_pre: f64,
    /// `∞` when the free run diverged.
    pub q_sim: f64,
    /// First divergent index of the free run.
    pub diverged_at: Option<usize>,
    pub horizon: usize,
}

/// Predicts and simulates on a validation sequence and scores both.
pub fn validate(model: &PredictorModel, u: &[f64], y: &[f64]) -> Result<SimulationResult> {
    let predicted = one_step_predict(model, u, y)?;
    let m = model.model_order;
    let (simulated, diverged_at) = match simulate(model, u, &y[..m]) {
        Ok(s) => (Some(s), None),
        Err(Error::Divergence { index, .. }) => (None, Some(index)),
        Err(e) => return Err(e),
    };
    let (q_pre, q_sim) = match &simulated {
        Some(s) => metrics(y, &predicted, s, m)?,
        None => (metrics(y, &predicted, &predicted, m)?.0, f64::INFINITY),
    };
    Ok(SimulationResult {
        predicted,
        simulated,
        q_pre,
        q_sim,
        diverged_at,
        horizon: u.len(),
    })
}

/// A predictor together with the selection and solve that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model: PredictorModel,
    pub selection: SelectionResult,
    pub report: FitReport,
}

/// Selects hyperparameters for the target, then solves for the
/// coefficients; the RKHS-norm budget `χ` applies to constrained targets.
pub fn fit(
    data: &RegressionData,
    structure: &KernelStructure,
    selection: &SelectionConfig,
    chi: f64,
) -> Result<FittedModel> {
    let constrained = selection.target.is_constrained();
    if constrained && !(chi > 0.0 && chi < 1.0) {
        return input_err(format!("chi must lie in (0, 1), got {chi}"));
    }
    let sel = select_hyperparameters(selection, data, structure)?;
    let kernel = KernelInstance::new(
        structure.clone(),
        sel.eta.as_slice().to_vec(),
        2 * data.model_order() + 1,
    )?;
    let report = solve_constrained(&FitProblem {
        data: data.clone(),
        kernel: kernel.clone(),
        beta: sel.beta,
        chi,
        constrained,
    })?;
    let model = PredictorModel::new(
        data.model_order(),
        kernel,
        data.regressors().to_vec(),
        report.coefficients.clone(),
        selection.target,
    )?;
    Ok(FittedModel {
        model,
        selection: sel,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputDistribution {
    /// i.i.d. uniform on `[−bound, bound]`.
    Uniform { bound: f64 },
    /// i.i.d. normal with standard deviation `std`.
    Gaussian { std: f64 },
}

impl InputDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Uniform { bound } => rng.gen_range(-bound..=bound),
            Self::Gaussian { std } => std * rng.sample::<f64, _>(StandardNormal),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Self::Uniform { bound } => bound,
            Self::Gaussian { std } => std,
        };
        if !(v.is_finite() && v >= 0.0) {
            return input_err(format!("input distribution scale must be finite and >= 0, got {v}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Largest `|ŷ_t|` of single trajectories.
    Boundedness,
    /// Gap `|ŷᵃ_t − ŷᵇ_t|` of trajectory pairs sharing the input.
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub horizon: usize,
    pub input: InputDistribution,
    pub trials: usize,
    pub mode: ProbeMode,
    /// Seed outputs are drawn uniformly from `[−seed_bound, seed_bound]`.
    pub seed_bound: f64,
    /// Incremental mode: the second seed window differs from the first by a
    /// vector of Euclidean norm at most this value.
    pub initial_gap: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrial {
    /// Boundedness: `max |ŷ_t|`; incremental: `max |ŷᵃ_t − ŷᵇ_t|`, both
    /// over `t ≥ m`.
    pub max_value: f64,
    /// The same quantity at the last time step.
    pub final_value: f64,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub trials: Vec<ProbeTrial>,
    /// Largest `max_value` over trials that did not diverge.
    pub max_value: f64,
    pub diverged: usize,
}

/// Simulates random trajectories (or trajectory pairs) to check
/// boundedness or incremental convergence empirically. Divergence is
/// recorded per trial.
pub fn stability_probe(model: &PredictorModel, probe: &ProbeConfig) -> Result<ProbeReport> {
    let m = model.model_order;
    if probe.trials == 0 {
        return input_err("probe needs at least one trial");
    }
    if probe.horizon <= m {
        return input_err(format!("probe horizon {} must exceed m = {m}", probe.horizon));
    }
    probe.input.validate()?;
    for (name, v) in [("seed_bound", probe.seed_bound), ("initial_gap", probe.initial_gap)] {
        if !(v.is_finite() && v >= 0.0) {
            return input_err(format!("{name} must be finite and >= 0, got {v}"));
        }
    }

    let trials: Vec<ProbeTrial> = (0..probe.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
            rng.set_stream(i as u64);
            let u: Vec<f64> = (0..probe.horizon).map(|_| probe.input.sample(&mut rng)).collect();
            let seed_a: Vec<f64> = (0..m)
                .map(|_| rng.gen_range(-probe.seed_bound..=probe.seed_bound))
                .collect();
            let traj_a = simulate(model, &u, &seed_a);
            match probe.mode {
                ProbeMode::Boundedness => match traj_a {
                    Ok(y) => ProbeTrial {
                        max_value: y[m..].iter().fold(0.0, |a, v| a.max(v.abs())),
                        final_value: y[y.len() - 1].abs(),
                        diverged_at: None,
                    },
                    Err(e) => diverged(e),
                },
                ProbeMode::Incremental => {
                    let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let scale = probe.initial_gap / (m as f64).sqrt();
                    let seed_b: Vec<f64> = seed_a.iter().zip(&d).map(|(a, di)| a + scale * di).collect();
                    match (traj_a, simulate(model, &u, &seed_b)) {
                        (Ok(a), Ok(b)) => {
                            let gaps: Vec<f64> = a[m..].iter().zip(&b[m..]).map(|(x, y)| (x - y).abs()).collect();
                            ProbeTrial {
                                max_value: gaps.iter().fold(0.0, |acc, g| acc.max(*g)),
                                final_value: gaps[gaps.len() - 1],
                                diverged_at: None,
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => diverged(e),
                    }
                }
            }
        })
        .collect();
    let diverged = trials.iter().filter(|t| t.diverged_at.is_some()).count();
    let max_value = trials
        .iter()
        .filter(|t| t.diverged_at.is_none())
        .fold(0.0_f64, |a, t| a.max(t.max_value));
    Ok(ProbeReport {
        mode: probe.mode,
        trials,
        max_value,
        diverged,
    })
}

fn diverged(e: Error) -> ProbeTrial {
    let index = match e {
        Error::Divergence { index, .. } => Some(index),
        _ => Some(0),
    };
    ProbeTrial {
        max_value: f64::INFINITY,
        final_value: f64::INFINITY,
        diverged_at: index,
    }
}
