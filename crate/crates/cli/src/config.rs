use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skillscope::compare::LdaMethodConfig;
use skillscope::corpus::DEFAULT_TRIM_QUANTILE;
use skillscope::econo::SeType;
use skillscope::embed::EmbeddingParams;

pub const METHODS: [&str; 4] = ["spitz5", "deming10", "disco", "lda"];

/// Every stage parameter of a run. Missing fields take their defaults, so
/// `{}` is a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trim_quantile: f64,
    /// Skip cleaning in `compare` when the input is already clean.
    pub clean: bool,
    pub stopwords: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub schemes: SchemePaths,
    pub embedding: EmbeddingConfig,
    pub lda: LdaMethodConfig,
    /// Extra LDA runs at fixed topic counts, reported as `lda<K>`.
    pub lda_k_variants: Vec<usize>,
    pub methods: Vec<String>,
    pub models: Vec<u8>,
    pub se_type: SeType,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trim_quantile: DEFAULT_TRIM_QUANTILE,
            clean: true,
            stopwords: None,
            lemmas: None,
            schemes: SchemePaths::default(),
            embedding: EmbeddingConfig::default(),
            lda: LdaMethodConfig::default(),
            lda_k_variants: Vec::new(),
            methods: METHODS.map(String::from).to_vec(),
            models: vec![1, 2, 3],
            se_type: SeType::Classical,
            synth: SynthSettings::default(),
        }
    }
}

/// Scheme file overrides; `None` uses the bundled scheme.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemePaths {
    pub spitz5: Option<PathBuf>,
    pub deming10: Option<PathBuf>,
    pub disco_nondomain: Option<PathBuf>,
    pub disco_domains: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub min_count: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub subsample: Option<f64>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        let p = EmbeddingParams::new(0);
        EmbeddingConfig {
            dim: p.dim,
            window: p.window,
            negative: p.negative,
            min_count: p.min_count,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            subsample: p.subsample,
        }
    }
}

impl EmbeddingConfig {
    pub fn params(&self, seed: u64) -> EmbeddingParams {
        EmbeddingParams {
            dim: self.dim,
            window: self.window,
            negative: self.negative,
            min_count: self.min_count,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            subsample: self.subsample,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n_docs: usize,
    pub topics: usize,
    pub vocab_size: usize,
    pub target_r2: f64,
    /// Skill keywords appended to each synthetic description.
    pub plant_keywords: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings { n_docs: 2000, topics: 4, vocab_size: 200, target_r2: 0.5, plant_keywords: 0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.25).contains(&self.trim_quantile) {
            bail!("trim_quantile must lie in [0, 0.25), got {}", self.trim_quantile);
        }
        for m in &self.methods {
            if !METHODS.contains(&m.as_str()) {
                bail!("unknown method `{m}` (expected one of {})", METHODS.join(", "));
            }
        }
        if let Some(&m) = self.models.iter().find(|&&m| !(1..=3).contains(&m)) {
            bail!("unknown model {m} (expected 1, 2 or 3)");
        }
        Ok(())
    }
}
