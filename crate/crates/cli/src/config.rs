//! Run configuration. Precedence, lowest first: built-in defaults, the TOML
//! file given by `--config`, then command-line flags. The top-level `seed`
//! always replaces `train.seed`.

use std::path::{Path, PathBuf};

use mulcom::data::{Split, SynthSpec};
use mulcom::diagnostics::GradCheckSuite;
use mulcom::msrrn::ReasonerMode;
use mulcom::mulcom::ModelConfig;
use mulcom::streams::StreamKind;
use mulcom::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Model hyperparameters; feature widths and trope count come from data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub trope_dim: usize,
    pub attn_dim: usize,
    pub hidden_dim: usize,
    pub steps: usize,
    pub heads: usize,
    pub streams: Vec<StreamKind>,
    pub reasoner: ReasonerMode,
    pub max_tokens: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let c = ModelConfig::new(0, 0, 0);
        Self {
            trope_dim: c.trope_dim,
            attn_dim: c.attn_dim,
            hidden_dim: c.hidden_dim,
            steps: c.steps,
            heads: c.heads,
            streams: c.streams,
            reasoner: c.reasoner,
            max_tokens: c.max_tokens,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, num_tropes: usize, word_dim: usize, sent_dim: usize) -> ModelConfig {
        ModelConfig {
            num_tropes,
            word_dim,
            sent_dim,
            trope_dim: self.trope_dim,
            attn_dim: self.attn_dim,
            hidden_dim: self.hidden_dim,
            steps: self.steps,
            heads: self.heads,
            streams: self.streams.clone(),
            reasoner: self.reasoner,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    /// Dataset manifest for train, eval, stats and cooccur.
    pub manifest: Option<PathBuf>,
    /// Model to evaluate.
    pub checkpoint: Option<PathBuf>,
    /// Precomputed scores to evaluate instead of a checkpoint.
    pub scores: Option<PathBuf>,
    /// Split that eval reads.
    pub split: Split,
    /// Random-baseline trials in eval; 0 skips the baseline.
    pub baseline_trials: usize,
    /// Pairs kept in the co-occurrence ranking.
    pub top_k: usize,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub gradcheck: GradCheckSuite,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 1,
            manifest: None,
            checkpoint: None,
            scores: None,
            split: Split::Test,
            baseline_trials: 0,
            top_k: 15,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
            gradcheck: GradCheckSuite::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies cross-field rules and checks every section.
    pub fn finish(mut self) -> Result<Self, CliError> {
        self.train.seed = self.seed;
        if self.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        self.train.validate().map_err(CliError::usage)?;
        self.synth.validate().map_err(CliError::usage)?;
        self.model.resolve(1, 1, 1).validate().map_err(CliError::usage)?;
        if self.top_k == 0 {
            return Err(CliError::Usage("top_k must be positive".into()));
        }
        Ok(self)
    }

    pub fn manifest(&self) -> Result<&Path, CliError> {
        self.manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("a dataset manifest is required (--manifest or `manifest` in the config)".into()))
    }
}
