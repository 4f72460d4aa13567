//! The run configuration file (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TripletSpec;
use crate::generator::{ModelConfig, TrainConfig};
use crate::reward::{AsMode, MockSpec, RewardConfig};
use crate::rl::TrainerConfig;
use crate::chem::{QedParams, TokenSequence};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// One SMILES per line. When absent, a synthetic corpus is generated.
    pub corpus: Option<PathBuf>,
    pub synth_corpus_size: usize,
    /// Triplet file. When absent, triplets are synthesised from the corpus.
    pub triplets: Option<PathBuf>,
    /// Conditioning profiles for fine-tuning and sampling, one per line as
    /// whitespace-separated floats. Defaults to the triplet deltas.
    pub profiles: Option<PathBuf>,
    /// Reference corpus for novelty.
    pub reference: Option<PathBuf>,
    pub max_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpus: None,
            synth_corpus_size: 200,
            triplets: None,
            profiles: None,
            reference: None,
            max_len: TokenSequence::DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub k: f64,
    pub qed_threshold: f64,
    pub as_mode: AsMode,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardConfig::default();
        RewardSection {
            k: r.k,
            qed_threshold: r.qed_threshold,
            as_mode: r.as_mode,
        }
    }
}

impl RewardSection {
    pub fn to_reward_config(&self) -> RewardConfig {
        RewardConfig {
            k: self.k,
            qed_threshold: self.qed_threshold,
            qed_params: QedParams::builtin().clone(),
            as_mode: self.as_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Mock {
        #[serde(default)]
        seed: u64,
        #[serde(default = "MockSpec::demo")]
        spec: MockSpec,
    },
    External {
        /// Shell command with `{in}` and `{out}` placeholders.
        command: String,
        workdir: PathBuf,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    300.0
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Mock {
            seed: 0,
            spec: MockSpec::demo(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Distinct valid molecules to produce.
    pub n: usize,
    /// Give up after `retry_factor × n` draws.
    pub retry_factor: usize,
    /// Draws per decoding batch.
    pub batch_size: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n: 100,
            retry_factor: 50,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub fingerprint_bits: usize,
    /// Dock every distinct valid molecule with the configured oracle.
    pub dock: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            fingerprint_bits: crate::chem::DEFAULT_FP_BITS,
            dock: false,
        }
    }
}

/// Everything a pipeline run needs. The top-level `seed` is copied into the
/// seed of every stage by [`RunConfig::resolve`], so one number pins a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub joint: TrainConfig,
    pub triplets: TripletSpec,
    pub finetune: TrainerConfig,
    pub reward: RewardSection,
    pub oracle: OracleConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("run"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            pretrain: TrainConfig::default(),
            joint: TrainConfig::default(),
            triplets: TripletSpec::default(),
            finetune: TrainerConfig::default(),
            reward: RewardSection::default(),
            oracle: OracleConfig::default(),
            sample: SampleConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Propagates the global seed and gene count into the stage sections
    /// and validates the result.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        self.pretrain.seed = self.seed;
        self.joint.seed = self.seed;
        self.finetune.seed = self.seed;
        self.triplets.seed = self.seed;
        self.triplets.gene_count = self.model.gene_count;
        self.finetune.max_len = self.data.max_len;
        self.model.max_len = self.data.max_len;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |section: &str, e: String| ConfigError::Invalid(format!("[{section}] {e}"));
        self.model.validate().map_err(|e| bad("model", e))?;
        self.pretrain.validate().map_err(|e| bad("pretrain", e))?;
        self.joint.validate().map_err(|e| bad("joint", e))?;
        self.finetune.validate().map_err(|e| bad("finetune", e.to_string()))?;
        self.reward
            .to_reward_config()
            .validate()
            .map_err(|e| bad("reward", e.to_string()))?;
        if self.data.max_len == 0 {
            return Err(bad("data", "max_len must be positive".into()));
        }
        if self.sample.retry_factor == 0 || self.sample.batch_size == 0 {
            return Err(bad("sample", "retry_factor and batch_size must be positive".into()));
        }
        if let OracleConfig::External { command, .. } = &self.oracle {
            if !command.contains("{in}") || !command.contains("{out}") {
                return Err(bad("oracle", "command needs {in} and {out} placeholders".into()));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the whole configuration; hashed into manifests.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
