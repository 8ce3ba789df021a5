//! Configuration file schema. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use narxstab::benchmarks::{MethodSpec, MultisineSpec, SyntheticSystemSpec, SystemKind, HH_DT};
use narxstab::kernels::{KernelSpec, KernelStructure};
use narxstab::model_selection::{OptimizerConfig, SelectionMethod, DEFAULT_IOTA};
use narxstab::viability::StabilityTarget;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Output directory; relative paths resolve against the working
    /// directory.
    pub out: Option<PathBuf>,
    pub generate: Option<GenerateConfig>,
    pub fit: Option<FitConfig>,
    pub predict: Option<PredictConfig>,
    pub simulate: Option<PredictConfig>,
    pub benchmark: Option<BenchmarkConfig>,
    pub check_viability: Option<ViabilityConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub system: SystemKind,
    /// Defaults to the benchmark value of the system.
    pub noise_std: Option<f64>,
    pub n_train: Option<usize>,
    pub n_valid: Option<usize>,
    #[serde(default)]
    pub full_scale: bool,
    pub multisine: Option<MultisineSpec>,
    pub hh_dt: Option<f64>,
}

impl GenerateConfig {
    pub fn resolve(&self, seed: u64) -> SyntheticSystemSpec {
        let base = SyntheticSystemSpec::benchmark(self.system, self.full_scale, seed);
        SyntheticSystemSpec {
            system: self.system,
            noise_std: self.noise_std.unwrap_or(base.noise_std),
            n_train: self.n_train.unwrap_or(base.n_train),
            n_valid: self.n_valid.unwrap_or(base.n_valid),
            seed,
            multisine: self.multisine.clone().unwrap_or_default(),
            hh_dt: self.hh_dt.unwrap_or(HH_DT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionBlock {
    #[serde(default = "default_method")]
    pub method: SelectionMethod,
    #[serde(default = "default_iota")]
    pub iota: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Default for SelectionBlock {
    fn default() -> Self {
        Self {
            method: default_method(),
            iota: default_iota(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

fn default_method() -> SelectionMethod {
    SelectionMethod::EmpiricalBayes
}

fn default_iota() -> f64 {
    DEFAULT_IOTA
}

fn default_order() -> usize {
    2
}

fn default_chi() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Training data CSV with columns `t,u,y`.
    pub data: PathBuf,
    pub kernel: KernelStructure,
    pub target: StabilityTarget,
    #[serde(default = "default_order")]
    pub model_order: usize,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default)]
    pub selection: SelectionBlock,
    /// Model file name inside the output directory.
    #[serde(default = "default_model_file")]
    pub model_file: String,
}

fn default_model_file() -> String {
    "model.toml".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    /// Data CSV with columns `t,u,y`.
    pub data: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub runs: Option<usize>,
    #[serde(default)]
    pub full_scale: bool,
    /// Subset of the benchmark methods by name (`Aa`, `Ab`, `Ba`, `Bb`,
    /// `Ha`, `Hb`, `Hc`); all when absent.
    pub methods: Option<Vec<String>>,
    /// Methods beyond the built-in ones.
    #[serde(default)]
    pub custom_methods: Vec<MethodSpec>,
    pub selection: Option<SelectionBlock>,
    pub chi: Option<f64>,
    pub model_order: Option<usize>,
    /// Per-system overrides of the dataset sizes and noise.
    #[serde(default)]
    pub systems: Vec<GenerateConfig>,
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsifierConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

impl Default for FalsifierConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            radius: default_radius(),
        }
    }
}

fn default_samples() -> usize {
    100_000
}

fn default_radius() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViabilityConfig {
    pub kernel: KernelSpec,
    /// Targets to check; defaults to `iss, bibs, diss, dbibs`.
    pub targets: Option<Vec<StabilityTarget>>,
    /// Run the sampling falsifier for every checked target.
    pub falsifier: Option<FalsifierConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>(
            "[fit]\ndata = \"a\"\nkernel = { kind = \"gaussian\" }\ntarget = \"iss\"\nbeta = 1\n"
        )
        .is_err());
    }

    #[test]
    fn fit_defaults() {
        let c: RunConfig =
            toml::from_str("[fit]\ndata = \"a.csv\"\nkernel = { kind = \"gaussian\" }\ntarget = \"diss\"\n").unwrap();
        let fit = c.fit.unwrap();
        assert_eq!((fit.model_order, fit.chi), (2, 0.99));
        assert_eq!(fit.selection, SelectionBlock::default());
        assert_eq!(fit.target, StabilityTarget::DELTA_ISS);
        assert_eq!(fit.model_file, "model.toml");
    }

    #[test]
    fn generate_overrides_merge_with_benchmark_defaults() {
        let g: GenerateConfig = toml::from_str("system = \"H\"\nn_train = 50\n").unwrap();
        let spec = g.resolve(4);
        assert_eq!(spec.n_train, 50);
        assert_eq!(spec.n_valid, 1001);
        assert_eq!(spec.noise_std, 0.0);
        assert_eq!(spec.seed, 4);
    }
}
