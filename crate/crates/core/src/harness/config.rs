use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    five_core_filter, ingest_csv, leave_one_out_split, synth_generate, InteractionDataset, SynthParams,
};
use crate::error::{Error, Result};
use crate::metrics::{ConvergenceSpec, DEFAULT_KS};
use crate::model::{ModelKind, ModelSpec};
use crate::optim::{AdamSpec, MuonSpec};

/// Where the interactions come from. Exactly one source per config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SynthParams),
    Csv(CsvSource),
    /// A dataset file written by `prep`.
    Prepared(PreparedSource),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub five_core: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparedSource {
    pub path: PathBuf,
}

fn yes() -> bool {
    true
}

impl DatasetSource {
    pub fn load(&self) -> Result<InteractionDataset> {
        match self {
            DatasetSource::Synthetic(p) => synth_generate(p),
            DatasetSource::Csv(src) => {
                let ingested = ingest_csv(&src.path)?;
                if ingested.malformed > 0 {
                    log::warn!("{}: skipped {} malformed lines", src.path.display(), ingested.malformed);
                }
                let records = if src.five_core {
                    five_core_filter(&ingested.records)
                } else {
                    ingested.records
                };
                leave_one_out_split(&records)
            }
            DatasetSource::Prepared(src) => InteractionDataset::load_json(&src.path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub embed_dim: usize,
    pub max_len: usize,
    pub ffn_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::SASRecLite,
            embed_dim: 64,
            max_len: 50,
            ffn_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, vocab_size: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            vocab_size,
            embed_dim: self.embed_dim,
            max_len: self.max_len,
            ffn_dim: self.ffn_dim,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    /// Plain Adam; weight decay must be zero.
    Adam {
        #[serde(default)]
        adam: AdamSpec<f64>,
    },
    AdamW {
        #[serde(default)]
        adam: AdamSpec<f64>,
    },
    /// Muon on hidden matrices, Adam/AdamW on everything else.
    MuonRec {
        #[serde(default)]
        adam: AdamSpec<f64>,
        #[serde(default)]
        muon: MuonSpec<f64>,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            adam: AdamSpec::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn label(&self) -> &'static str {
        match self {
            OptimizerConfig::Adam { .. } => "adam",
            OptimizerConfig::AdamW { .. } => "adamw",
            OptimizerConfig::MuonRec { .. } => "muonrec",
        }
    }

    pub fn adam(&self) -> &AdamSpec<f64> {
        match self {
            OptimizerConfig::Adam { adam }
            | OptimizerConfig::AdamW { adam }
            | OptimizerConfig::MuonRec { adam, .. } => adam,
        }
    }

    pub fn adam_mut(&mut self) -> &mut AdamSpec<f64> {
        match self {
            OptimizerConfig::Adam { adam }
            | OptimizerConfig::AdamW { adam }
            | OptimizerConfig::MuonRec { adam, .. } => adam,
        }
    }

    pub fn muon(&self) -> Option<&MuonSpec<f64>> {
        match self {
            OptimizerConfig::MuonRec { muon, .. } => Some(muon),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        match self {
            OptimizerConfig::Adam { adam } if adam.lambda != 0.0 => Err(Error::InvalidConfig(
                "optimizer adam takes no weight decay; use adamw".into(),
            )),
            OptimizerConfig::MuonRec { muon, .. } => muon.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_steps: u64,
    pub convergence: ConvergenceSpec,
    /// Cutoffs for recall and NDCG. Must include 10.
    pub ks: Vec<usize>,
    /// Drop the user's training items from the candidate set at evaluation.
    pub exclude_history: bool,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub save_checkpoint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 256,
            max_steps: 2000,
            convergence: ConvergenceSpec::default(),
            ks: DEFAULT_KS.to_vec(),
            exclude_history: true,
            seed: 0,
            output_dir: None,
            save_checkpoint: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !self.ks.contains(&10) {
            return Err(Error::InvalidConfig("ks must include 10".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidConfig("ks must be positive".into()));
        }
        if self.model.embed_dim == 0 || self.model.max_len == 0 {
            return Err(Error::InvalidConfig("embed_dim and max_len must be >= 1".into()));
        }
        if self.model.kind == ModelKind::SASRecLite && self.model.ffn_dim == 0 {
            return Err(Error::InvalidConfig("ffn_dim must be >= 1".into()));
        }
        if let DatasetSource::Synthetic(p) = &self.dataset {
            p.validate()?;
        }
        self.convergence.validate()?;
        self.optimizer.validate()
    }

    /// The config with every default spelled out.
    pub fn resolved(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    /// The cutoffs in ascending order without duplicates.
    pub fn sorted_ks(&self) -> Vec<usize> {
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}
