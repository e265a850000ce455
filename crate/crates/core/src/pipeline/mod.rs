//! End-to-end jobs: SCADA ingestion, scenario filtering, generator
//! training, curve modeling from a scatter, the benchmark table and timing.

pub mod ingest;
pub mod run;
pub mod scenario;
pub mod suite;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use ingest::{ingest_scada, ingest_scada_reader, quantile, Ingested, Normalization};
pub use run::{run_dit_training, run_wpcm, SyntheticPairs, TrainingOutcome, WpcmOutcome};
pub use scenario::{apply_scenario, LabelSource, Pattern, RoughFilter, Scenario, ScenarioSpec};
pub use suite::{
    hardware_description, measure_runtime, measure_wpcm_runtime, run_benchmark_suite, ss_metric_name,
    train_test_split, write_runtime_csv, RuntimeEntry, SuiteRow, SuiteTable,
};

use crate::benchmarks::{BenchmarkConfig, BenchmarkKind, SearchConfig, SnnConfig, SplineConfig};
use crate::error::{Error, Result};
use crate::extraction::ExtractionConfig;
use crate::metrics::DEFAULT_ALPHAS;
use crate::nn::{NetworkConfig, TrainConfig};
use crate::raster::RasterConfig;
use crate::synthesis::SynthesisConfig;

/// Overrides `paths.output_dir` when set.
pub const OUT_DIR_ENV: &str = "DITWPC_OUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Normalized cut-in speed below which points are left out of the MAPE.
    pub cws: f64,
    pub alphas: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            cws: 0.12,
            alphas: DEFAULT_ALPHAS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub benchmarks: Vec<BenchmarkKind>,
    pub runtime_repetitions: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            benchmarks: BenchmarkKind::ALL.to_vec(),
            runtime_repetitions: 5,
        }
    }
}

/// Everything a job needs. Serialized as TOML with one table per section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub test_split_fraction: f64,
    pub paths: Paths,
    pub normalization: Normalization,
    pub scenario: ScenarioSpec,
    pub synthesis: SynthesisConfig,
    pub raster: RasterConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub extraction: ExtractionConfig,
    pub search: SearchConfig,
    pub snn: SnnConfig,
    pub spline: SplineConfig,
    pub metrics: MetricsConfig,
    pub suite: SuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            test_split_fraction: 0.2,
            paths: Paths::default(),
            normalization: Normalization::default(),
            scenario: ScenarioSpec::default(),
            synthesis: SynthesisConfig::default(),
            raster: RasterConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            extraction: ExtractionConfig::default(),
            search: SearchConfig::default(),
            snn: SnnConfig::default(),
            spline: SplineConfig::default(),
            metrics: MetricsConfig::default(),
            suite: SuiteConfig::default(),
        }
    }
}

impl RunConfig {
    /// 64x64 frame, 16 base channels and 500 training samples: trainable on
    /// one CPU core in well under an hour.
    pub fn desk() -> Self {
        RunConfig {
            synthesis: SynthesisConfig {
                n_samples: 500,
                ..SynthesisConfig::default()
            },
            raster: RasterConfig::desk(),
            network: NetworkConfig::desk(),
            train: TrainConfig {
                n_iter: 40,
                ..TrainConfig::default()
            },
            extraction: ExtractionConfig::desk(),
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_split_fraction > 0.0 && self.test_split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_split_fraction must lie in (0, 1), got {}",
                self.test_split_fraction
            )));
        }
        self.scenario.validate()?;
        self.normalization.validate()?;
        self.synthesis.validate()?;
        self.raster.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        self.extraction.validate()?;
        self.search.validate()?;
        self.snn.validate()?;
        self.spline.validate()?;
        if (self.raster.width, self.raster.height) != (self.network.image_size, self.network.image_size) {
            return Err(Error::Config(format!(
                "raster frame {}x{} does not match the network input size {}",
                self.raster.width, self.raster.height, self.network.image_size
            )));
        }
        if !(0.0..=1.0).contains(&self.metrics.cws) {
            return Err(Error::Config("metrics.cws must lie in [0, 1]".into()));
        }
        if self.suite.runtime_repetitions < 5 {
            return Err(Error::Config(format!(
                "runtime_repetitions must be at least 5, got {}",
                self.suite.runtime_repetitions
            )));
        }
        Ok(())
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            search: self.search.clone(),
            snn: self.snn.clone(),
            spline: self.spline.clone(),
        }
    }

    /// `$DITWPC_OUT_DIR`, else `paths.output_dir`, else `./ditwpc-out`.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self
                .paths
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("ditwpc-out")),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
