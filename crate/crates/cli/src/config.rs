//! Experiment configuration: one TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use editnet_core::oracle::DEFAULT_CAP;
use editnet_core::summarizers::{Extractor, GreedyOracleExtractor, LeadExtractor, SalienceAbstractor};
use editnet_core::trainer::AdamConfig;
use editnet_core::{EncoderConfig, OracleConfig, RewardWeights, TrainConfig};

pub const DEFAULT_HIDDEN: usize = 64;
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl DataPaths {
    pub fn split(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => self.train.as_deref(),
            Split::Validation => self.validation.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    Lead,
    GreedyOracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    pub kind: ExtractorKind,
    pub k: usize,
}

impl Default for ExtractorSection {
    fn default() -> Self {
        ExtractorSection {
            kind: ExtractorKind::Lead,
            k: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractorSection {
    pub ratio: f64,
}

impl Default for AbstractorSection {
    fn default() -> Self {
        AbstractorSection {
            ratio: SalienceAbstractor::default().ratio,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub cap: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { cap: DEFAULT_CAP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    /// Editor hidden width m.
    pub hidden: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            epochs: t.epochs,
            hidden: DEFAULT_HIDDEN,
            adam: t.adam,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataPaths,
    pub extractor: ExtractorSection,
    pub abstractor: AbstractorSection,
    pub encoder: EncoderConfig,
    pub reward: RewardWeights,
    pub oracle: OracleSection,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out: PathBuf::from("runs/default"),
            data: DataPaths::default(),
            extractor: ExtractorSection::default(),
            abstractor: AbstractorSection::default(),
            encoder: EncoderConfig::default(),
            reward: RewardWeights::default(),
            oracle: OracleSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<ExperimentConfig> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        ExperimentConfig::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.extractor.k == 0 {
            bail!("extractor.k must be at least 1");
        }
        let ratio = self.abstractor.ratio;
        if !(ratio > 0.0 && ratio <= 1.0) {
            bail!("abstractor.ratio must be in (0, 1], got {ratio}");
        }
        if self.oracle.cap == 0 {
            bail!("oracle.cap must be at least 1");
        }
        if self.train.hidden == 0 {
            bail!("train.hidden must be at least 1");
        }
        self.encoder.validate()?;
        self.reward.validate()?;
        self.train_config(1).validate()?;
        let paths: Vec<&Path> = Split::ALL.iter().filter_map(|s| self.data.split(*s)).collect();
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                bail!("dataset path {} is used for more than one split", a.display());
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.train_data {
            self.data.train = Some(v.clone());
        }
        if let Some(v) = &o.validation_data {
            self.data.validation = Some(v.clone());
        }
        if let Some(v) = &o.test_data {
            self.data.test = Some(v.clone());
        }
        if let Some(v) = o.extractor {
            self.extractor.kind = v;
        }
        if let Some(v) = o.k {
            self.extractor.k = v;
        }
        if let Some(v) = o.ratio {
            self.abstractor.ratio = v;
        }
        if let Some(v) = o.width {
            self.encoder.n = v;
        }
        if let Some(v) = o.context_window {
            self.encoder.context_window = v;
        }
        if let Some(v) = o.cap {
            self.oracle.cap = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.lr {
            self.train.adam.lr = v;
        }
        if let Some(v) = o.hidden {
            self.train.hidden = v;
        }
    }

    /// Loads `path` (or the defaults), applies overrides and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
        let mut config = match path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    /// Creates the output directory and records this config in it.
    pub fn write_resolved(&self) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn extractor(&self) -> Box<dyn Extractor> {
        match self.extractor.kind {
            ExtractorKind::Lead => Box::new(LeadExtractor { k: self.extractor.k }),
            ExtractorKind::GreedyOracle => Box::new(GreedyOracleExtractor {
                k: self.extractor.k,
                weights: self.reward,
            }),
        }
    }

    pub fn abstractor(&self) -> SalienceAbstractor {
        SalienceAbstractor {
            ratio: self.abstractor.ratio,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            weights: self.reward,
            cap: self.oracle.cap,
        }
    }

    pub fn train_config(&self, workers: usize) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed,
            adam: self.train.adam,
            workers,
        }
    }

    pub fn label_cache(&self, split: Split) -> PathBuf {
        self.out.join(format!("labels-{}.jsonl", split.name()))
    }
}

/// Flags that override fields of the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Seed for every random choice in the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "train-data", global = true)]
    pub train_data: Option<PathBuf>,
    #[arg(long = "validation-data", global = true)]
    pub validation_data: Option<PathBuf>,
    #[arg(long = "test-data", global = true)]
    pub test_data: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub extractor: Option<ExtractorKind>,
    /// Sentences per extract
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Abstractor compression ratio
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    /// Encoder width n
    #[arg(long, global = true)]
    pub width: Option<usize>,
    #[arg(long = "context-window", global = true)]
    pub context_window: Option<usize>,
    /// Longest extract the oracle will enumerate
    #[arg(long, global = true)]
    pub cap: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Editor hidden width m
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
}
