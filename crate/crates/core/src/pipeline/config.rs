use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, SyntheticConfig};
use crate::kernelsvm::SvmTrainConfig;
use crate::neural::{EncoderKind, ModelDims, TrainSchedule};
use crate::treekernel::KernelConfig;

/// The model that produces automatic labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelerKind {
    Tk,
    Fv,
    Cnn,
    Lstm,
}

impl LabelerKind {
    pub fn name(self) -> &'static str {
        match self {
            LabelerKind::Tk => "TK",
            LabelerKind::Fv => "FV",
            LabelerKind::Cnn => "CNN",
            LabelerKind::Lstm => "LSTM",
        }
    }

    pub fn encoder(self) -> Option<EncoderKind> {
        match self {
            LabelerKind::Cnn => Some(EncoderKind::Cnn),
            LabelerKind::Lstm => Some(EncoderKind::Lstm),
            _ => None,
        }
    }
}

impl std::str::FromStr for LabelerKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tk" => Ok(LabelerKind::Tk),
            "fv" => Ok(LabelerKind::Fv),
            "cnn" => Ok(LabelerKind::Cnn),
            "lstm" | "bilstm" => Ok(LabelerKind::Lstm),
            _ => Err(PipelineError::Config(format!("unknown labeler `{s}` (expected tk, fv, cnn or lstm)"))),
        }
    }
}

/// Where the splits come from. Files are JSONL, or the Quora TSV when the
/// extension is `.tsv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    /// Without an unlabeled file, retrieve this many BM25 candidates from
    /// the training questions for every training question.
    pub bm25_candidates: usize,
    /// Fractions carved off `train` when no dev/test file is given.
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Gold training pairs used (0 = all).
    pub gs_train_size: usize,
    /// Unlabeled pairs labeled for pre-training (0 = all).
    pub automatic_size: usize,
    pub labeler: LabelerKind,
    pub encoder: EncoderKind,
    pub kernel: KernelConfig,
    pub svm: SvmTrainConfig,
    pub dims: ModelDims,
    pub min_count: usize,
    /// Pre-trained word embeddings in word2vec text format.
    pub embeddings: Option<PathBuf>,
    /// Schedule of networks trained on gold only (baselines, neural labelers).
    pub baseline: TrainSchedule,
    pub pretrain: TrainSchedule,
    pub finetune: TrainSchedule,
    /// Also report MAP, grouping pairs by their first question.
    pub ranking: bool,
    pub vote: bool,
    pub curve_sizes: Vec<usize>,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            gs_train_size: 0,
            automatic_size: 0,
            labeler: LabelerKind::Tk,
            encoder: EncoderKind::Cnn,
            kernel: KernelConfig::default(),
            svm: SvmTrainConfig::default(),
            dims: ModelDims::default(),
            min_count: 1,
            embeddings: None,
            baseline: TrainSchedule { lr: 1e-4, ..TrainSchedule::default() },
            pretrain: TrainSchedule { lr: 1e-4, ..TrainSchedule::default() },
            finetune: TrainSchedule { lr: 1e-5, ..TrainSchedule::default() },
            ranking: false,
            vote: false,
            curve_sizes: Vec::new(),
            data: DataConfig::default(),
        }
    }
}

/// Training stages with independent seed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Baseline,
    Pretrain,
    Finetune,
    Svm,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.kernel.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.svm.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.dims.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, s) in [("baseline", &self.baseline), ("pretrain", &self.pretrain), ("finetune", &self.finetune)] {
            s.validate().map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
        }
        if self.finetune.lr >= self.pretrain.lr {
            return Err(PipelineError::Config(format!(
                "finetune learning rate {} must be smaller than pretrain learning rate {}",
                self.finetune.lr, self.pretrain.lr
            )));
        }
        if self.curve_sizes.windows(2).any(|w| w[0] > w[1]) {
            return Err(PipelineError::Config("curve_sizes must be ascending".into()));
        }
        let d = &self.data;
        if !(0.0..1.0).contains(&d.dev_fraction)
            || !(0.0..1.0).contains(&d.test_fraction)
            || d.dev_fraction + d.test_fraction >= 1.0
        {
            return Err(PipelineError::Config("dev_fraction + test_fraction must lie in [0, 1)".into()));
        }
        if let Some(s) = &d.synthetic {
            s.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 12 hex digits of [`ExperimentConfig::hash`], used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_owned()
    }

    /// Seed of a stage, derived from the experiment seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let salt: u64 = match stage {
            Stage::Init => 0x9e37_79b9_7f4a_7c15,
            Stage::Baseline => 0xbf58_476d_1ce4_e5b9,
            Stage::Pretrain => 0x94d0_49bb_1331_11eb,
            Stage::Finetune => 0x2545_f491_4f6c_dd1d,
            Stage::Svm => 0x1405_7b7e_f767_814f,
        };
        let mut z = self.seed.wrapping_add(salt);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// The configured schedule of a stage with its derived seed.
    pub fn schedule(&self, stage: Stage) -> TrainSchedule {
        let base = match stage {
            Stage::Pretrain => self.pretrain,
            Stage::Finetune => self.finetune,
            _ => self.baseline,
        };
        TrainSchedule {
            seed: self.stage_seed(stage),
            ..base
        }
    }

    pub fn svm_config(&self) -> SvmTrainConfig {
        SvmTrainConfig {
            seed: self.stage_seed(Stage::Svm),
            ..self.svm
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "name = \"x\"\nseed = 3\nlabeler = \"fv\"\n[finetune]\nlr = 1e-6\n[data.synthetic]\ntrain = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.labeler, LabelerKind::Fv);
        assert_eq!(cfg.finetune.lr, 1e-6);
        assert_eq!(cfg.finetune.epochs, TrainSchedule::default().epochs);
        assert_eq!(cfg.data.synthetic.unwrap().train, 20);
        assert_eq!(cfg.data.synthetic.unwrap().unlabeled, 5000);
    }

    #[test]
    fn finetune_rate_must_be_smaller() {
        let mut cfg = ExperimentConfig::default();
        cfg.finetune.lr = cfg.pretrain.lr;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(m)) if m.contains("smaller")));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_sizes() {
        assert!(ExperimentConfig::from_toml("labeler = \"svm\"").is_err());
        assert!(ExperimentConfig::from_toml("lerning_rate = 0.1").is_err());
        assert!(ExperimentConfig::from_toml("curve_sizes = [10, 5]").is_err());
        assert!(ExperimentConfig::from_toml("[data]\ndev_fraction = 0.6\ntest_fraction = 0.5").is_err());
    }

    #[test]
    fn hash_and_seeds_follow_the_config() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.stage_seed(Stage::Pretrain), b.stage_seed(Stage::Pretrain));
        assert_ne!(a.stage_seed(Stage::Pretrain), a.stage_seed(Stage::Finetune));
        assert_eq!(a.schedule(Stage::Finetune).lr, 1e-5);
        assert_eq!(a.schedule(Stage::Baseline).seed, a.stage_seed(Stage::Baseline));
    }

    #[test]
    fn shipped_config_parses() {
        let cfg = ExperimentConfig::from_toml(include_str!("../../../../configs/synthetic.toml")).unwrap();
        assert_eq!(cfg.data.synthetic.unwrap().unlabeled, 5000);
        assert!(cfg.finetune.lr < cfg.pretrain.lr);
    }
}
