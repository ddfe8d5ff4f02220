//! Experiment configuration. Every paper-derived parameter (forecast
//! offset, fold count, thresholds, ensemble sizes) lives here with its
//! default; nothing is hardcoded in the pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tradecast_core::models::{BoostedParams, CartParams, ForestParams, LogisticParams};
use tradecast_core::synth::WorldParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct DataConfig {
    pub kind: DataKind,
    /// CSV path for `kind = "csv"`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// World generator settings for `kind = "synth"`.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Csv,
    Synth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_synth_years")]
    pub years: usize,
    #[serde(default = "default_first_year")]
    pub first_year: i32,
    /// Seed for world construction and generation; defaults to the
    /// experiment seed.
    #[serde(default)]
    pub world_seed: Option<u64>,
    #[serde(flatten)]
    pub world: WorldParams,
}

fn default_synth_years() -> usize {
    12
}

fn default_first_year() -> i32 {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub first_year: i32,
    pub last_year: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    /// Years between a feature basket and its label.
    #[serde(default = "default_delta")]
    pub delta_model: i32,
    /// Horizons evaluated by `delta-sweep` (and `describe` transitions).
    #[serde(default = "default_eval_deltas")]
    pub eval_deltas: Vec<i32>,
    /// Eq. 3 inactivity threshold for activation candidates.
    #[serde(default = "default_inactivity")]
    pub inactivity_threshold: f64,
    /// RCA binarization threshold.
    #[serde(default = "default_rca_threshold")]
    pub rca_threshold: f64,
    /// Stack features through `y_last - delta` instead of
    /// `y_last - 2*delta`; leaks the test horizon, off by default.
    #[serde(default)]
    pub full_history_features: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            delta_model: default_delta(),
            eval_deltas: default_eval_deltas(),
            inactivity_threshold: default_inactivity(),
            rca_threshold: default_rca_threshold(),
            full_history_features: false,
        }
    }
}

fn default_delta() -> i32 {
    5
}

fn default_eval_deltas() -> Vec<i32> {
    vec![1, 2, 3, 4, 5]
}

fn default_inactivity() -> f64 {
    0.25
}

fn default_rca_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tree,
    Forest,
    Boosted,
    Logistic,
    /// The persistence benchmark; no training at all.
    Rca,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub boosted: BoostedSection,
    #[serde(default)]
    pub logistic: LogisticSection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: default_model_kind(),
            tree: TreeConfig::default(),
            forest: ForestSection::default(),
            boosted: BoostedSection::default(),
            logistic: LogisticSection::default(),
        }
    }
}

fn default_model_kind() -> ModelKind {
    ModelKind::Forest
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "one")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub max_features: Option<usize>,
}

fn one() -> usize {
    1
}

impl TreeConfig {
    pub fn to_params(&self) -> CartParams {
        CartParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf.max(1),
            max_features: self.max_features,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    #[serde(flatten)]
    pub params: ForestParams,
}

impl Default for ForestSection {
    fn default() -> Self {
        ForestSection {
            params: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedSection {
    #[serde(flatten)]
    pub params: BoostedParams,
}

impl Default for BoostedSection {
    fn default() -> Self {
        BoostedSection {
            params: BoostedParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSection {
    #[serde(flatten)]
    pub params: LogisticParams,
}

impl Default for LogisticSection {
    fn default() -> Self {
        LogisticSection {
            params: LogisticParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            enabled: false,
            k: default_k(),
        }
    }
}

fn default_k() -> usize {
    13
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_precision_k")]
    pub precision_k: usize,
    #[serde(default = "default_bins")]
    pub calibration_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            precision_k: default_precision_k(),
            calibration_bins: default_bins(),
        }
    }
}

fn default_precision_k() -> usize {
    10
}

fn default_bins() -> usize {
    8
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.forecast.delta_model < 1 {
            bail!("forecast.delta_model must be at least 1");
        }
        if self.window.first_year + 2 * self.forecast.delta_model > self.window.last_year {
            bail!(
                "window [{}, {}] too short for delta_model {}",
                self.window.first_year,
                self.window.last_year,
                self.forecast.delta_model
            );
        }
        if self.cv.enabled && self.cv.k < 2 {
            bail!("cv.k must be at least 2 when cross-validation is enabled");
        }
        if !(self.forecast.inactivity_threshold > 0.0) {
            bail!("forecast.inactivity_threshold must be positive");
        }
        match self.data.kind {
            DataKind::Csv if self.data.path.is_none() => {
                bail!("data.kind = \"csv\" needs data.path")
            }
            DataKind::Synth if self.data.synth.is_none() => {
                bail!("data.kind = \"synth\" needs a [data.synth] section")
            }
            _ => Ok(()),
        }
    }

    /// The training span switch resolved from the config flag.
    pub fn train_span(&self) -> tradecast_core::dataset::TrainSpan {
        if self.forecast.full_history_features {
            tradecast_core::dataset::TrainSpan::FullHistory
        } else {
            tradecast_core::dataset::TrainSpan::LeakFree
        }
    }
}
