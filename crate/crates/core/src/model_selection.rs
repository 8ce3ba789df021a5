//! Hyperparameter selection under a stability target.
//!
//! The search runs over `x = (log(β − ι), ξ)` where `ξ` are the coordinates
//! of the feasible map of the target, so every iterate is a feasible pair.
//! Each restart is an independent Nelder–Mead run.

use std::cell::Cell;

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::{Hyperparameters, KernelInstance, KernelStructure};
use crate::solver::{solve_ridge, RegressionData, Spectral};
use crate::viability::{feasible_parameterization, target_membership, FeasibleMap, StabilityTarget};

/// Default lower bound on `β`.
pub const DEFAULT_IOTA: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Cost assigned to points where the cost cannot be evaluated, and to every
/// evaluation past the budget of a restart.
const PENALTY: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionMethod {
    /// Negative log marginal likelihood of the Gaussian-process model.
    EmpiricalBayes,
    /// Generalized cross-validation.
    Gcv,
    /// Mean squared held-out error over `k` contiguous folds.
    KFold { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Cost evaluations per restart.
    pub max_evals: usize,
    /// Stop a restart when the standard deviation of the simplex costs
    /// falls below this value.
    pub sd_tolerance: f64,
    /// Edge length of the initial simplex in search coordinates.
    pub initial_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_evals: 2000,
            sd_tolerance: 1e-10,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    #[serde(default = "default_iota")]
    pub iota: f64,
    pub target: StabilityTarget,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_iota() -> f64 {
    DEFAULT_IOTA
}

impl SelectionConfig {
    pub fn new(method: SelectionMethod, target: StabilityTarget) -> Self {
        Self {
            method,
            iota: DEFAULT_IOTA,
            target,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iota.is_finite() && self.iota > 0.0) {
            return input_err(format!("iota must be finite and > 0, got {}", self.iota));
        }
        if let SelectionMethod::KFold { k } = self.method {
            if k < 2 {
                return input_err(format!("k-fold selection needs k >= 2, got {k}"));
            }
        }
        let o = &self.optimizer;
        if o.restarts == 0 {
            return input_err("optimizer.restarts must be >= 1");
        }
        if o.max_evals == 0 {
            return input_err("optimizer.max_evals must be >= 1");
        }
        if !(o.sd_tolerance.is_finite() && o.sd_tolerance >= 0.0) {
            return input_err("optimizer.sd_tolerance must be finite and >= 0");
        }
        if !(o.initial_step.is_finite() && o.initial_step > 0.0) {
            return input_err("optimizer.initial_step must be finite and > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub beta: f64,
    pub eta: Hyperparameters,
    pub cost: f64,
    /// Cost evaluations over all restarts.
    pub evaluations: usize,
    /// The returned `η` passed the membership test of the target.
    pub feasible: bool,
    /// At least one restart met the simplex tolerance before its budget ran
    /// out.
    pub converged: bool,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return input_err(format!("beta must be finite and > 0, got {beta}"));
    }
    Ok(())
}

fn gram(eta: &[f64], data: &RegressionData, structure: &KernelStructure) -> Result<DMatrix<f64>> {
    let k = KernelInstance::new(structure.clone(), eta.to_vec(), 2 * data.model_order() + 1)?;
    k.gram_matrix(data.regressors())
}

/// `½ ȳᵀ(K + βI)⁻¹ȳ + ½ log det(K + βI) + (N/2) log 2π`.
pub fn eb_cost(beta: f64, eta: &[f64], data: &RegressionData, structure: &KernelStructure) -> Result<f64> {
    check_beta(beta)?;
    eb_cost_gram(&gram(eta, data, structure)?, data.targets(), beta)
}

/// [`eb_cost`] on an explicit Gram matrix.
///
/// Uses a Cholesky factorization of `K + βI`; when that fails the clamped
/// eigendecomposition of `K` is used instead.
pub fn eb_cost_gram(k: &DMatrix<f64>, y: &DVector<f64>, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = y.len() as f64;
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += beta;
    }
    let (quad, logdet) = match a.cholesky() {
        Some(chol) => {
            let c = chol.solve(y);
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            (y.dot(&c), logdet)
        }
        None => {
            let s = Spectral::new(k, y)?;
            let c = s.ridge(beta)?;
            let logdet = s.eigenvalues().iter().map(|l| (l + beta).ln()).sum::<f64>();
            (y.dot(&c), logdet)
        }
    };
    let j = 0.5 * quad + 0.5 * logdet + 0.5 * n * LN_2PI;
    finite_cost(j)
}

/// `N‖(I − H)ȳ‖² / tr(I − H)²` with `H = K(K + βI)⁻¹`.
pub fn gcv_cost(beta: f64, eta: &[f64], data: &RegressionData, structure: &KernelStructure) -> Result<f64> {
    check_beta(beta)?;
    gcv_cost_gram(&gram(eta, data, structure)?, data.targets(), beta)
}

/// [`gcv_cost`] on an explicit Gram matrix.
pub fn gcv_cost_gram(k: &DMatrix<f64>, y: &DVector<f64>, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = y.len();
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += beta;
    }
    // I − H = β(K + βI)⁻¹
    let inv = match a.cholesky() {
        Some(chol) => chol.inverse(),
        None => Spectral::new(k, y)?.shifted_inverse(beta)?,
    };
    let resid = (&inv * y) * beta;
    let trace = beta * inv.trace();
    if trace <= 0.0 {
        return Err(Error::Numeric(format!("GCV denominator vanished at beta = {beta:e}")));
    }
    finite_cost(n as f64 * resid.norm_squared() / (trace * trace))
}

/// Mean squared held-out error of the ridge fit over `k` contiguous folds.
pub fn kfold_cost(beta: f64, eta: &[f64], data: &RegressionData, structure: &KernelStructure, k: usize) -> Result<f64> {
    check_beta(beta)?;
    kfold_cost_gram(&gram(eta, data, structure)?, data.targets(), beta, k)
}

/// [`kfold_cost`] on an explicit Gram matrix.
pub fn kfold_cost_gram(gram: &DMatrix<f64>, y: &DVector<f64>, beta: f64, k: usize) -> Result<f64> {
    check_beta(beta)?;
    let n = y.len();
    if k < 2 || k > n {
        return input_err(format!("k-fold needs 2 <= k <= N = {n}, got {k}"));
    }
    let mut sse = 0.0;
    for fold in 0..k {
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let ktr = gram.select_rows(&train).select_columns(&train);
        let ytr = y.select_rows(&train);
        let c = solve_ridge(&ktr, &ytr, beta)?;
        for i in lo..hi {
            let pred: f64 = train.iter().zip(c.iter()).map(|(&j, cj)| gram[(i, j)] * cj).sum();
            sse += (y[i] - pred).powi(2);
        }
    }
    finite_cost(sse / n as f64)
}

fn finite_cost(j: f64) -> Result<f64> {
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::Numeric(format!("cost evaluated to {j}")))
    }
}

/// The configured cost at `(β, η)`.
pub fn selection_cost(
    method: SelectionMethod,
    beta: f64,
    eta: &[f64],
    data: &RegressionData,
    structure: &KernelStructure,
) -> Result<f64> {
    match method {
        SelectionMethod::EmpiricalBayes => eb_cost(beta, eta, data, structure),
        SelectionMethod::Gcv => gcv_cost(beta, eta, data, structure),
        SelectionMethod::KFold { k } => kfold_cost(beta, eta, data, structure, k),
    }
}

struct SearchProblem<'a> {
    method: SelectionMethod,
    iota: f64,
    map: &'a FeasibleMap,
    data: &'a RegressionData,
    budget: usize,
    used: Cell<usize>,
}

impl SearchProblem<'_> {
    fn decode(&self, x: &[f64]) -> (f64, Hyperparameters) {
        (self.iota + x[0].clamp(-700.0, 700.0).exp(), self.map.to_eta(&x[1..]))
    }
}

impl CostFunction for SearchProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if self.used.get() >= self.budget {
            return Ok(PENALTY);
        }
        self.used.set(self.used.get() + 1);
        let (beta, eta) = self.decode(x);
        Ok(selection_cost(self.method, beta, eta.as_slice(), self.data, self.map.structure()).unwrap_or(PENALTY))
    }
}

struct RestartOutcome {
    x: Vec<f64>,
    cost: f64,
    evaluations: usize,
    converged: bool,
}

fn run_restart(problem: SearchProblem<'_>, start: Vec<f64>, cfg: &OptimizerConfig) -> Result<RestartOutcome> {
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += cfg.initial_step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.sd_tolerance)
        .map_err(|e| Error::Input(e.to_string()))?;
    let max_iters = cfg.max_evals as u64;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numeric(format!("optimizer failed: {e}")))?;
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Numeric("optimizer returned no parameter".into()))?;
    let used = res.problem.problem.as_ref().map(|p| p.used.get()).unwrap_or(0);
    let converged =
        matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged)) && used < cfg.max_evals;
    Ok(RestartOutcome {
        x,
        cost: state.get_best_cost(),
        evaluations: used,
        converged,
    })
}

fn starting_points(dim: usize, y: &DVector<f64>, cfg: &SelectionConfig) -> Vec<Vec<f64>> {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let log_beta0 = (0.1 * var).max(cfg.iota).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.optimizer.restarts)
        .map(|r| {
            let mut x = vec![log_beta0];
            if r == 0 {
                x.extend(std::iter::repeat_n(0.0, dim));
            } else {
                x[0] += 3.0 * rng.sample::<f64, _>(StandardNormal);
                x.extend((0..dim).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)));
            }
            x
        })
        .collect()
}

/// Minimizes the configured cost over `β ≥ ι` and `η` in the target set.
///
/// Restarts run in parallel; the result depends only on the inputs and the
/// seed. The returned pair is replayed through the membership test of the
/// target and a violation is reported as a numeric error.
pub fn select_hyperparameters(
    config: &SelectionConfig,
    data: &RegressionData,
    structure: &KernelStructure,
) -> Result<SelectionResult> {
    config.validate()?;
    let map = feasible_parameterization(structure, config.target)?;
    let starts = starting_points(map.dim(), data.targets(), config);

    let outcomes: Vec<Result<RestartOutcome>> = starts
        .into_par_iter()
        .map(|start| {
            let problem = SearchProblem {
                method: config.method,
                iota: config.iota,
                map: &map,
                data,
                budget: config.optimizer.max_evals,
                used: Cell::new(0),
            };
            run_restart(problem, start, &config.optimizer)
        })
        .collect();

    let mut evaluations = 0;
    let mut converged = false;
    let mut best: Option<RestartOutcome> = None;
    for o in outcomes {
        let o = o?;
        evaluations += o.evaluations;
        converged |= o.converged;
        if best.as_ref().is_none_or(|b| o.cost < b.cost) {
            best = Some(o);
        }
    }
    let best = best.expect("at least one restart");
    if best.cost >= PENALTY {
        return Err(Error::Numeric(
            "the selection cost could not be evaluated at any visited point".into(),
        ));
    }

    let decoder = SearchProblem {
        method: config.method,
        iota: config.iota,
        map: &map,
        data,
        budget: 0,
        used: Cell::new(0),
    };
    let (beta, eta) = decoder.decode(&best.x);
    let cost = selection_cost(config.method, beta, eta.as_slice(), data, structure)?;
    let feasible = target_membership(structure, eta.as_slice(), config.target)?;
    if !feasible {
        return Err(Error::Numeric(format!(
            "selected hyperparameters {:?} fall outside the {} set",
            eta.as_slice(),
            config.target
        )));
    }
    Ok(SelectionResult {
        beta,
        eta,
        cost,
        evaluations,
        feasible,
        converged,
    })
}
