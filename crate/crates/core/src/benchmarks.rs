//! Synthetic benchmark systems and the Monte Carlo comparison of
//! unconstrained and stability-constrained fits.
//!
//! * System A: `y_t = 0.2‖p_t‖√(sin‖p_t‖ + 1)`
//! * System B: `y_t = 0.2 sin(‖p_t‖)²`
//!
//! with `p_t = (y_{t−2}, y_{t−1}, u_{t−2}, u_{t−1})`, and the potassium gate
//! of the Hodgkin–Huxley neuron
//!
//! ```text
//! κ̇ = (V + 10)(1 − κ) / (100 (e^{(V+10)/10} − 1)) − e^{V/80} κ / 8,
//! I = 36 (V − 12) κ⁴,
//! ```
//!
//! driven by a random multisine `V(t) = Σ Aᵢ sin(2πνᵢt + φᵢ)`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::KernelStructure;
use crate::model_selection::{OptimizerConfig, SelectionConfig, SelectionMethod, DEFAULT_IOTA};
use crate::predictor::{fit, validate};
use crate::solver::build_regression_data;
use crate::viability::StabilityTarget;

/// Model order used by every benchmark experiment.
pub const BENCHMARK_ORDER: usize = 2;
/// RKHS-norm budget used by every benchmark experiment.
pub const BENCHMARK_CHI: f64 = 0.99;
/// Default RK4 step for the Hodgkin–Huxley gate, in seconds.
pub const HH_DT: f64 = 1e-3;

fn check_difference_inputs(u: &[f64], length: usize) -> Result<()> {
    if length < 2 {
        return input_err(format!("trajectory length must be >= 2, got {length}"));
    }
    if u.len() < length {
        return input_err(format!("need {length} inputs, got {}", u.len()));
    }
    Ok(())
}

fn simulate_difference(u: &[f64], y0: f64, y1: f64, length: usize, g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    check_difference_inputs(u, length)?;
    let mut y = Vec::with_capacity(length);
    y.extend([y0, y1]);
    for t in 2..length {
        let norm = (y[t - 2].powi(2) + y[t - 1].powi(2) + u[t - 2].powi(2) + u[t - 1].powi(2)).sqrt();
        y.push(g(norm));
    }
    Ok(y)
}

/// System A from `(y₀, y₁)`; `u` must hold at least `length` samples.
pub fn simulate_system_a(u: &[f64], y0: f64, y1: f64, length: usize) -> Result<Vec<f64>> {
    simulate_difference(u, y0, y1, length, |r| 0.2 * r * (r.sin() + 1.0).sqrt())
}

/// System B from `(y₀, y₁)`; `u` must hold at least `length` samples.
pub fn simulate_system_b(u: &[f64], y0: f64, y1: f64, length: usize) -> Result<Vec<f64>> {
    simulate_difference(u, y0, y1, length, |r| 0.2 * r.sin().powi(2))
}

/// Opening and closing rates `(a(V), b(V))` of the potassium gate.
pub fn hh_rates(v: f64) -> (f64, f64) {
    let x = v + 10.0;
    // x / (e^{x/10} − 1) has the removable value 10 at x = 0
    let ratio = if x.abs() < 1e-6 { 10.0 } else { x / (x / 10.0).exp_m1() };
    (ratio / 100.0, (v / 80.0).exp() / 8.0)
}

/// `κ̇` at membrane potential `v`.
pub fn hh_kappa_dot(v: f64, kappa: f64) -> f64 {
    let (a, b) = hh_rates(v);
    a * (1.0 - kappa) - b * kappa
}

/// Potassium current `I = 36 (V − 12) κ⁴`.
pub fn hh_current(v: f64, kappa: f64) -> f64 {
    36.0 * (v - 12.0) * kappa.powi(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhTrajectory {
    pub times: Vec<f64>,
    pub voltage: Vec<f64>,
    pub kappa: Vec<f64>,
    pub current: Vec<f64>,
}

/// Integrates the gate with fixed-step RK4 from `κ(0) = kappa0` and samples
/// it at the increasing, nonnegative `sample_times`.
///
/// Steps of `dt` are taken on the grid `t = i·dt`; a sample time off the
/// grid is reached with one shortened step.
pub fn simulate_hh(v: impl Fn(f64) -> f64, kappa0: f64, sample_times: &[f64], dt: f64) -> Result<HhTrajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return input_err(format!("dt must be finite and > 0, got {dt}"));
    }
    if !kappa0.is_finite() {
        return input_err("kappa0 must be finite");
    }
    if sample_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return input_err("sample times must be finite and >= 0");
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return input_err("sample times must be nondecreasing");
    }
    let rk4 = |t: f64, k: f64, h: f64| {
        let k1 = hh_kappa_dot(v(t), k);
        let k2 = hh_kappa_dot(v(t + 0.5 * h), k + 0.5 * h * k1);
        let k3 = hh_kappa_dot(v(t + 0.5 * h), k + 0.5 * h * k2);
        let k4 = hh_kappa_dot(v(t + h), k + h * k3);
        k + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };

    let mut out = HhTrajectory {
        times: sample_times.to_vec(),
        voltage: Vec::with_capacity(sample_times.len()),
        kappa: Vec::with_capacity(sample_times.len()),
        current: Vec::with_capacity(sample_times.len()),
    };
    // (grid index, state on the grid)
    let mut i: u64 = 0;
    let mut k = kappa0;
    for &target in sample_times {
        let steps = target / dt;
        let whole = if (steps - steps.round()).abs() < 1e-6 {
            steps.round() as u64
        } else {
            steps.floor() as u64
        };
        while i < whole {
            k = rk4(i as f64 * dt, k, dt);
            i += 1;
            if !k.is_finite() {
                return Err(Error::Numeric(format!(
                    "gate state became non-finite at t = {}",
                    i as f64 * dt
                )));
            }
        }
        let t_grid = i as f64 * dt;
        let rest = target - t_grid;
        let k_at = if rest > 1e-9 * dt { rk4(t_grid, k, rest) } else { k };
        let vt = v(target);
        out.voltage.push(vt);
        out.kappa.push(k_at);
        out.current.push(hh_current(vt, k_at));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultisineSpec {
    pub component_count: usize,
    pub amplitude_range: (f64, f64),
    pub frequency_range: (f64, f64),
    pub phase_range: (f64, f64),
}

impl Default for MultisineSpec {
    fn default() -> Self {
        Self {
            component_count: 50,
            amplitude_range: (0.1, 0.5),
            frequency_range: (0.0, 1.0),
            phase_range: (0.0, 2.0 * PI),
        }
    }
}

impl MultisineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.component_count == 0 {
            return input_err("multisine needs at least one component");
        }
        for (name, (lo, hi)) in [
            ("amplitude", self.amplitude_range),
            ("frequency", self.frequency_range),
            ("phase", self.phase_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return input_err(format!("{name} range ({lo}, {hi}) must be finite and ordered"));
            }
        }
        Ok(())
    }

    /// Draws one realization; amplitudes, frequencies and phases are drawn
    /// per component in that order.
    pub fn sample(&self, rng: &mut impl Rng) -> Multisine {
        let u = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.gen::<f64>();
        let mut components = Vec::with_capacity(self.component_count);
        for _ in 0..self.component_count {
            let a = u(rng, self.amplitude_range);
            let nu = u(rng, self.frequency_range);
            let phi = u(rng, self.phase_range);
            components.push((a, nu, phi));
        }
        Multisine { components }
    }
}

/// `V(t) = Σ Aᵢ sin(2πνᵢt + φᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multisine {
    /// `(Aᵢ, νᵢ, φᵢ)`.
    pub components: Vec<(f64, f64, f64)>,
}

impl Multisine {
    pub fn eval(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|(a, nu, phi)| a * (2.0 * PI * nu * t + phi).sin())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "A")]
    SystemA,
    #[serde(rename = "B")]
    SystemB,
    #[serde(rename = "H")]
    HodgkinHuxleyK,
}

impl SystemKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::SystemA => "A",
            Self::SystemB => "B",
            Self::HodgkinHuxleyK => "H",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Self::SystemA),
            "B" | "b" => Ok(Self::SystemB),
            "H" | "h" => Ok(Self::HodgkinHuxleyK),
            _ => input_err(format!("unknown system {s:?}; expected A, B or H")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSystemSpec {
    pub system: SystemKind,
    /// Standard deviation of the additive output noise.
    pub noise_std: f64,
    pub n_train: usize,
    pub n_valid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub multisine: MultisineSpec,
    #[serde(default = "default_hh_dt")]
    pub hh_dt: f64,
}

fn default_hh_dt() -> f64 {
    HH_DT
}

impl SyntheticSystemSpec {
    /// Benchmark defaults: 200 samples and noise std 0.05 for A, 200 and
    /// 0.02 for B, 201 noiseless samples for H; validation sets of 200, 200
    /// and 1001 (5001 at full scale).
    pub fn benchmark(system: SystemKind, full_scale: bool, seed: u64) -> Self {
        let (noise_std, n_train, n_valid) = match system {
            SystemKind::SystemA => (0.05, 200, 200),
            SystemKind::SystemB => (0.02, 200, 200),
            SystemKind::HodgkinHuxleyK => (0.0, 201, if full_scale { 5001 } else { 1001 }),
        };
        Self {
            system,
            noise_std,
            n_train,
            n_valid,
            seed,
            multisine: MultisineSpec::default(),
            hh_dt: HH_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return input_err(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        if self.n_train == 0 || self.n_valid == 0 {
            return input_err("n_train and n_valid must be >= 1");
        }
        if !(self.hh_dt.is_finite() && self.hh_dt > 0.0) {
            return input_err(format!("hh_dt must be finite and > 0, got {}", self.hh_dt));
        }
        self.multisine.validate()
    }
}

/// Paired input/output measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Series,
    pub valid: Series,
}

fn difference_series(system: SystemKind, n: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Result<Series> {
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let y0 = normal(rng);
    let y1 = normal(rng);
    // u_0 .. u_{n+2}; samples t = 1..n use u_{t+2}, y_{t+2}
    let u: Vec<f64> = (0..n + 3).map(|_| normal(rng)).collect();
    let y = match system {
        SystemKind::SystemA => simulate_system_a(&u, y0, y1, n + 3)?,
        SystemKind::SystemB => simulate_system_b(&u, y0, y1, n + 3)?,
        SystemKind::HodgkinHuxleyK => unreachable!(),
    };
    let mut out = Series {
        u: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for t in 1..=n {
        out.u.push(u[t + 2]);
        out.y.push(y[t + 2] + noise_std * normal(rng));
    }
    Ok(out)
}

fn hh_series(spec: &SyntheticSystemSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Series> {
    let kappa0: f64 = rng.sample(StandardNormal);
    let v = spec.multisine.sample(rng);
    // sample t = 1..n at 49.9 + 0.1t, computed without accumulated round-off
    let times: Vec<f64> = (1..=n).map(|t| (499 + t) as f64 / 10.0).collect();
    let traj = simulate_hh(|t| v.eval(t), kappa0, &times, spec.hh_dt)?;
    let y = traj
        .current
        .iter()
        .map(|i| i + spec.noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Series { u: traj.voltage, y })
}

/// Draws the training and validation sets of `spec`.
///
/// Training data come from stream 0 of the seeded generator and validation
/// data from stream 1, so both are fixed by the seed alone.
pub fn generate_dataset(spec: &SyntheticSystemSpec) -> Result<Dataset> {
    spec.validate()?;
    let draw = |stream: u64, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        match spec.system {
            SystemKind::HodgkinHuxleyK => hh_series(spec, n, &mut rng),
            s => difference_series(s, n, spec.noise_std, &mut rng),
        }
    };
    Ok(Dataset {
        train: draw(0, spec.n_train)?,
        valid: draw(1, spec.n_valid)?,
    })
}

/// One identification method of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub system: SystemKind,
    pub kernel: KernelStructure,
    pub target: StabilityTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_order")]
    pub model_order: usize,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default = "default_iota")]
    pub iota: f64,
    pub selection: SelectionMethod,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub systems: Vec<SyntheticSystemSpec>,
    pub methods: Vec<MethodSpec>,
    /// Record wall-clock fit times (makes the results nondeterministic).
    #[serde(default)]
    pub record_timing: bool,
}

fn default_order() -> usize {
    BENCHMARK_ORDER
}

fn default_chi() -> f64 {
    BENCHMARK_CHI
}

fn default_iota() -> f64 {
    DEFAULT_IOTA
}

/// The seven benchmark methods: `Aa`/`Ab` (feature Gaussian kernel,
/// unconstrained / ISS), `Ba`/`Bb` (Gaussian, unconstrained / δISS) and
/// `Ha`/`Hb`/`Hc` (Gaussian, unconstrained / δBIBS / δISS).
pub fn benchmark_methods() -> Vec<MethodSpec> {
    use KernelStructure as K;
    use StabilityTarget as T;
    let m = |name: &str, system, kernel, target| MethodSpec {
        name: name.into(),
        system,
        kernel,
        target,
    };
    vec![
        m("Aa", SystemKind::SystemA, K::FeatureGaussian, T::Unconstrained),
        m("Ab", SystemKind::SystemA, K::FeatureGaussian, T::ISS),
        m("Ba", SystemKind::SystemB, K::Gaussian, T::Unconstrained),
        m("Bb", SystemKind::SystemB, K::Gaussian, T::DELTA_ISS),
        m("Ha", SystemKind::HodgkinHuxleyK, K::Gaussian, T::Unconstrained),
        m("Hb", SystemKind::HodgkinHuxleyK, K::Gaussian, T::DELTA_BIBS),
        m("Hc", SystemKind::HodgkinHuxleyK, K::Gaussian, T::DELTA_ISS),
    ]
}

impl MonteCarloConfig {
    /// The benchmark study: 20 runs with a reduced optimizer budget, or
    /// 501 runs with the default budget when `full_scale` is set.
    pub fn benchmark(full_scale: bool, seed: u64) -> Self {
        let optimizer = if full_scale {
            OptimizerConfig::default()
        } else {
            OptimizerConfig {
                restarts: 3,
                max_evals: 300,
                ..OptimizerConfig::default()
            }
        };
        Self {
            runs: if full_scale { 501 } else { 20 },
            seed,
            model_order: BENCHMARK_ORDER,
            chi: BENCHMARK_CHI,
            iota: DEFAULT_IOTA,
            selection: SelectionMethod::EmpiricalBayes,
            optimizer,
            systems: [SystemKind::SystemA, SystemKind::SystemB, SystemKind::HodgkinHuxleyK]
                .into_iter()
                .map(|s| SyntheticSystemSpec::benchmark(s, full_scale, 0))
                .collect(),
            methods: benchmark_methods(),
            record_timing: false,
        }
    }

    /// Keeps only the methods whose names are listed.
    pub fn retain_methods(&mut self, names: &[&str]) {
        self.methods.retain(|m| names.contains(&m.name.as_str()));
        let used: Vec<SystemKind> = self.methods.iter().map(|m| m.system).collect();
        self.systems.retain(|s| used.contains(&s.system));
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return input_err("runs must be >= 1");
        }
        if self.model_order == 0 {
            return input_err("model_order must be >= 1");
        }
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return input_err(format!("chi must lie in (0, 1), got {}", self.chi));
        }
        if self.methods.is_empty() {
            return input_err("at least one method is required");
        }
        for s in &self.systems {
            s.validate()?;
            if s.n_train <= self.model_order || s.n_valid <= self.model_order {
                return input_err(format!(
                    "system {} needs more than m = {} samples",
                    s.system.label(),
                    self.model_order
                ));
            }
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|o| o.name == m.name) {
                return input_err(format!("duplicate method name {:?}", m.name));
            }
            if !self.systems.iter().any(|s| s.system == m.system) {
                return input_err(format!(
                    "method {} uses system {} which has no spec",
                    m.name,
                    m.system.label()
                ));
            }
            m.kernel.validate()?;
            // surface infeasible pairs before any run starts
            crate::viability::feasible_parameterization(&m.kernel, m.target)?;
        }
        self.selection_config(StabilityTarget::Unconstrained, 0).validate()
    }

    fn selection_config(&self, target: StabilityTarget, seed: u64) -> SelectionConfig {
        SelectionConfig {
            method: self.selection,
            iota: self.iota,
            target,
            optimizer: self.optimizer.clone(),
            seed,
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run: usize,
    pub system: String,
    pub method: String,
    pub q_pre: f64,
    /// `inf` when the free run diverged.
    pub q_sim: f64,
    pub feasible: bool,
    pub fit_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub system: String,
    pub method: String,
    pub error: String,
}

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear interpolation between order statistics; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            if lo == hi || v[hi] == v[lo] {
                v[lo]
            } else {
                v[lo] + (h - lo as f64) * (v[hi] - v[lo])
            }
        };
        Some(Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub system: String,
    pub method: String,
    pub completed: usize,
    pub failures: usize,
    /// Runs whose free-run simulation diverged.
    pub diverged: usize,
    pub q_pre: Option<Quartiles>,
    pub q_sim: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResults {
    /// Sorted by run, then method order of the configuration.
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RunFailure>,
}

impl MonteCarloResults {
    /// Per-method summaries in configuration order.
    pub fn summarize(&self, methods: &[MethodSpec]) -> Vec<MethodSummary> {
        methods
            .iter()
            .map(|m| {
                let rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.method == m.name).collect();
                let pre: Vec<f64> = rows.iter().map(|r| r.q_pre).collect();
                let sim: Vec<f64> = rows.iter().map(|r| r.q_sim).collect();
                MethodSummary {
                    system: m.system.label().into(),
                    method: m.name.clone(),
                    completed: rows.len(),
                    failures: self.failures.iter().filter(|f| f.method == m.name).count(),
                    diverged: sim.iter().filter(|v| v.is_infinite()).count(),
                    q_pre: Quartiles::of(&pre),
                    q_sim: Quartiles::of(&sim),
                }
            })
            .collect()
    }
}

/// Seed of the dataset for `(system, run)`: every method on that system
/// sees the same data in a given run.
fn dataset_seed(master: u64, system: SystemKind, run: usize) -> u64 {
    let sys = match system {
        SystemKind::SystemA => 1,
        SystemKind::SystemB => 2,
        SystemKind::HodgkinHuxleyK => 3,
    };
    splitmix(master ^ splitmix(sys * 0x1_0000_0000 + run as u64))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits every method on fresh data in every run and scores it on a fresh
/// validation set.
///
/// A run whose fit fails is recorded in `failures` and excluded from the
/// rows; a free-run divergence is a valid outcome and is reported as
/// `q_sim = inf`.
pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloResults> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.runs)
        .flat_map(|r| (0..config.methods.len()).map(move |k| (r, k)))
        .collect();

    let outcomes: Vec<std::result::Result<ResultRow, RunFailure>> = jobs
        .into_par_iter()
        .map(|(run, k)| {
            let method = &config.methods[k];
            let system = config
                .systems
                .iter()
                .find(|s| s.system == method.system)
                .expect("validated");
            let fail = |e: Error| RunFailure {
                run,
                system: method.system.label().into(),
                method: method.name.clone(),
                error: e.to_string(),
            };
            let seed = dataset_seed(config.seed, method.system, run);
            let spec = SyntheticSystemSpec { seed, ..system.clone() };
            let outcome = (|| -> Result<ResultRow> {
                let data = generate_dataset(&spec)?;
                let reg = build_regression_data(&data.train.u, &data.train.y, config.model_order)?;
                let sel = config.selection_config(method.target, splitmix(seed ^ k as u64));
                let started = Instant::now();
                let fitted = fit(&reg, &method.kernel, &sel, config.chi)?;
                let elapsed = started.elapsed().as_secs_f64();
                let score = validate(&fitted.model, &data.valid.u, &data.valid.y)?;
                Ok(ResultRow {
                    run,
                    system: method.system.label().into(),
                    method: method.name.clone(),
                    q_pre: score.q_pre,
                    q_sim: score.q_sim,
                    feasible: fitted.selection.feasible,
                    fit_seconds: config.record_timing.then_some(elapsed),
                })
            })();
            outcome.map_err(fail)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(MonteCarloResults { rows, failures })
}
