use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SyntheticSpec;
use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::eval::MetricOptions;
use crate::features::TemplateId;
use crate::lexical::{DEFAULT_B, DEFAULT_K1};
use crate::model::{AdamConfig, ModelConfig, ReadoutKind};
use crate::objective::LossConfig;

pub const LR_GRID: [f64; 5] = [1e-5, 5e-5, 1e-4, 5e-4, 5e-6];
pub const BATCH_GRID: [usize; 4] = [16, 32, 64, 128];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub template: TemplateId,
    pub include_global: bool,
    /// Seed of the built-in hashing encoder, used when no embedding file is
    /// configured.
    pub encoder_seed: u64,
    /// Fraction of relation edges kept by static pruning.
    pub edge_keep: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            template: TemplateId::P0,
            include_global: true,
            encoder_seed: 0,
            edge_keep: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexicalConfig {
    pub k1: f64,
    pub b: f64,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub two_stage: bool,
    pub stage1_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 5,
            two_stage: false,
            stage1_k: 10,
        }
    }
}

/// File locations. Relative paths are resolved against `dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub train_qrels: PathBuf,
    pub test_qrels: PathBuf,
    /// Precomputed embeddings; the hashing encoder is used when absent.
    pub embeddings: Option<PathBuf>,
    pub prompts: PathBuf,
    pub graphs: PathBuf,
    pub checkpoint: PathBuf,
    pub run: PathBuf,
    pub report: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dir: PathBuf::from("legalgraph-out"),
            corpus: "corpus.jsonl".into(),
            train_qrels: "train_qrels.tsv".into(),
            test_qrels: "test_qrels.tsv".into(),
            embeddings: None,
            prompts: "prompts.jsonl".into(),
            graphs: "graphs.jsonl".into(),
            checkpoint: "checkpoint.json".into(),
            run: "run.tsv".into(),
            report: "report.json".into(),
        }
    }
}

impl PathsConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }
}

/// Everything a pipeline stage needs, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of training queries held out for checkpoint selection; 0
    /// disables validation.
    pub validation_fraction: f64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub optimizer: AdamConfig,
    pub features: FeatureConfig,
    pub lexical: LexicalConfig,
    pub retrieval: RetrievalConfig,
    pub metrics: MetricOptions,
    pub synth: SyntheticSpec,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            epochs: 100,
            batch_size: 16,
            validation_fraction: 0.0,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            optimizer: AdamConfig {
                lr: 5e-4,
                ..AdamConfig::default()
            },
            features: FeatureConfig::default(),
            lexical: LexicalConfig::default(),
            retrieval: RetrievalConfig::default(),
            metrics: MetricOptions::default(),
            synth: SyntheticSpec::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every invariant; called before any stage does work.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        self.synth.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(Error::Config("adam eps must be positive and weight decay non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.model.readout_kind == ReadoutKind::GlobalNode && !self.features.include_global {
            return Err(Error::Config(
                "global-node readout requires include_global = true".into(),
            ));
        }
        if !(self.features.edge_keep > 0.0 && self.features.edge_keep <= 1.0) {
            return Err(Error::Config(format!("edge_keep {} outside (0, 1]", self.features.edge_keep)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if self.retrieval.k == 0 || self.retrieval.stage1_k == 0 {
            return Err(Error::Config("k and stage1_k must be >= 1".into()));
        }
        if !(self.lexical.k1 >= 0.0) || !(0.0..=1.0).contains(&self.lexical.b) {
            return Err(Error::Config("bm25 needs k1 >= 0 and b in [0, 1]".into()));
        }
        if !LR_GRID.contains(&o.lr) {
            log::info!("learning rate {} is outside the usual grid {:?}", o.lr, LR_GRID);
        }
        if !BATCH_GRID.contains(&self.batch_size) {
            log::info!("batch size {} is outside the usual grid {:?}", self.batch_size, BATCH_GRID);
        }
        Ok(())
    }
}
