use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compress::CompressionSpec;
use crate::data::{synth_corpus, Corpus, Split, SynthSpec, TokenizerSpec};
use crate::error::{Error, Result};
use crate::model::{BaseTrainConfig, ModelConfig};
use crate::prompt::PromptTrainConfig;

/// Where a corpus comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    /// One of the shipped synthetic corpora (`alpha`, `beta`).
    Named { name: String, length: usize },
    Synth { spec: SynthSpec },
    File { name: String, path: PathBuf, tokenizer: TokenizerSpec },
}

impl CorpusSource {
    pub fn name(&self) -> &str {
        match self {
            CorpusSource::Named { name, .. } | CorpusSource::File { name, .. } => name,
            CorpusSource::Synth { spec } => &spec.name,
        }
    }

    pub fn load(&self) -> Result<Corpus> {
        match self {
            CorpusSource::Named { name, length } => synth_corpus(&SynthSpec::named(name, *length)?),
            CorpusSource::Synth { spec } => synth_corpus(spec),
            CorpusSource::File { name, path, tokenizer } => {
                let mut c = Corpus::from_file(path, tokenizer)?;
                c.name = name.clone();
                Ok(c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub spec: CompressionSpec,
    pub ks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub sources: Vec<CompressionSpec>,
    pub targets: Vec<CompressionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroShotConfig {
    pub specs: Vec<CompressionSpec>,
    pub n_tasks: usize,
    #[serde(default = "default_choices")]
    pub n_choices: usize,
    pub context_len: usize,
    pub choice_len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_choices() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub spec: CompressionSpec,
    pub ks: Vec<usize>,
    pub prefix_len: usize,
    pub steps: usize,
    pub repeats: usize,
}

/// One experiment configuration, read from JSON. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed, mixed into every stage seed below.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub base_train: BaseTrainConfig,
    pub corpora: Vec<CorpusSource>,
    /// Corpus used for base training, calibration and prompt training.
    pub train_corpus: String,
    pub eval_corpora: Vec<String>,
    pub compression: Vec<CompressionSpec>,
    pub prompt: PromptTrainConfig,
    #[serde(default)]
    pub k_sweep: Option<SweepConfig>,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    #[serde(default)]
    pub zero_shot: Option<ZeroShotConfig>,
    #[serde(default)]
    pub latency: Option<LatencyConfig>,
    #[serde(default = "default_eval_seq_len")]
    pub eval_seq_len: usize,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_eval_seq_len() -> usize {
    128
}

fn default_eval_split() -> Split {
    Split::Test
}

/// Mixes the global seed into a stage seed; global seed 0 leaves it unchanged.
pub fn mix_seed(global: u64, stage: u64) -> u64 {
    stage ^ global.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let names: BTreeSet<&str> = self.corpora.iter().map(CorpusSource::name).collect();
        if names.len() != self.corpora.len() {
            return Err(Error::Config("corpus names must be unique".into()));
        }
        let known = |n: &str| -> Result<()> {
            if names.contains(n) {
                Ok(())
            } else {
                Err(Error::Config(format!("corpus `{n}` is not defined")))
            }
        };
        known(&self.train_corpus)?;
        for n in &self.eval_corpora {
            known(n)?;
        }
        let mut specs: Vec<&CompressionSpec> = self.compression.iter().collect();
        if let Some(s) = &self.k_sweep {
            if s.ks.is_empty() {
                return Err(Error::Config("k sweep needs at least one k".into()));
            }
            specs.push(&s.spec);
        }
        if let Some(t) = &self.transfer {
            if t.sources.is_empty() || t.targets.is_empty() {
                return Err(Error::Config("transfer needs sources and targets".into()));
            }
            specs.extend(t.sources.iter().chain(&t.targets));
        }
        if let Some(z) = &self.zero_shot {
            specs.extend(&z.specs);
        }
        if let Some(l) = &self.latency {
            specs.push(&l.spec);
        }
        for s in specs {
            s.validate()?;
            if let Some(c) = &s.calib.corpus {
                known(c)?;
            }
        }
        self.prompt.validate()?;
        if self.eval_seq_len < 2 {
            return Err(Error::Config("eval_seq_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn seeded(&self, global: u64) -> ExperimentConfig {
        let mut c = self.clone();
        c.seed = global;
        c
    }

    /// Model config with the global seed mixed in.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { seed: mix_seed(self.seed, self.model.seed), ..self.model.clone() }
    }

    pub fn base_train_config(&self) -> BaseTrainConfig {
        BaseTrainConfig { seed: mix_seed(self.seed, self.base_train.seed), ..self.base_train.clone() }
    }

    pub fn prompt_config(&self, k: usize) -> PromptTrainConfig {
        PromptTrainConfig { k, seed: mix_seed(self.seed, self.prompt.seed), ..self.prompt.clone() }
    }
}
