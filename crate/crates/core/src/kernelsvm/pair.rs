use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decision_value, train_smo, Result, SvmError, SvmModel, SvmTrainConfig};
use crate::corpus::{Dataset, QuestionPair, Split};
use crate::lexfeats::feature_vector;
use crate::syntax::TreeOptions;
use crate::treekernel::{
    compute_prepared_gram, prepared_pair_kernel, GramMatrix, KernelConfig, PreparedPair,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Kernel between question pairs used by a [`PairSvm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PairKernel {
    /// Tree-kernel pair kernel over REL-tagged macro-trees.
    Tree(KernelConfig),
    /// Linear kernel over the 20 lexical features.
    Features,
}

impl PairKernel {
    pub fn name(&self) -> &'static str {
        match self {
            PairKernel::Tree(_) => "tk",
            PairKernel::Features => "fv",
        }
    }

    pub fn fingerprint(&self) -> u64 {
        match self {
            PairKernel::Tree(cfg) => cfg.fingerprint(),
            PairKernel::Features => 0x4656_2d6c_696e_6561,
        }
    }
}

/// Per-pair data the kernel needs at prediction time.
#[derive(Debug, Clone)]
enum Represented {
    Tree(PreparedPair),
    Features(Vec<f64>),
}

fn represent(kernel: &PairKernel, p: &QuestionPair) -> Result<Represented> {
    Ok(match kernel {
        PairKernel::Tree(cfg) => {
            Represented::Tree(PreparedPair::new(p, cfg, TreeOptions::default())?)
        }
        PairKernel::Features => Represented::Features(feature_vector(p).to_vec()),
    })
}

fn eval(kernel: &PairKernel, a: &Represented, b: &Represented) -> f64 {
    match (kernel, a, b) {
        (PairKernel::Tree(cfg), Represented::Tree(x), Represented::Tree(y)) => {
            prepared_pair_kernel(x, y, cfg)
        }
        (_, Represented::Features(x), Represented::Features(y)) => {
            x.iter().zip(y).map(|(u, v)| u * v).sum()
        }
        _ => unreachable!("representation always follows the kernel"),
    }
}

/// An SVM over question pairs that keeps its support pairs for prediction.
#[derive(Debug, Clone)]
pub struct PairSvm {
    pub kernel: PairKernel,
    pub model: SvmModel,
    /// Support pairs aligned with `model.support_indices`.
    pub support: Vec<QuestionPair>,
    coef: Vec<f64>,
    represented: Vec<Represented>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kernel: PairKernel,
    kernel_hash: String,
    model: SvmModel,
    support: Vec<QuestionPair>,
}

impl PairSvm {
    /// Trains on the labeled pairs of `gold`.
    pub fn train(gold: &Dataset, kernel: PairKernel, cfg: &SvmTrainConfig) -> Result<Self> {
        if let PairKernel::Tree(k) = &kernel {
            k.validate()?;
        }
        let labels = gold
            .pairs
            .iter()
            .map(|p| p.label.map(|l| if l { 1.0 } else { -1.0 }).ok_or(SvmError::Unlabeled))
            .collect::<Result<Vec<f64>>>()?;
        let reps = gold
            .pairs
            .par_iter()
            .map(|p| represent(&kernel, p))
            .collect::<Result<Vec<_>>>()?;
        let gram = Self::gram(&kernel, &reps);
        let model = train_smo(&gram, &labels, cfg)?;
        let support = model.support_indices.iter().map(|&i| gold.pairs[i].clone()).collect();
        let represented = model.support_indices.iter().map(|&i| reps[i].clone()).collect();
        Ok(Self {
            coef: model.support_coefficients(),
            kernel,
            model,
            support,
            represented,
        })
    }

    fn gram(kernel: &PairKernel, reps: &[Represented]) -> GramMatrix {
        match kernel {
            PairKernel::Tree(cfg) => {
                let prepared: Vec<PreparedPair> = reps
                    .iter()
                    .map(|r| match r {
                        Represented::Tree(p) => p.clone(),
                        Represented::Features(_) => unreachable!(),
                    })
                    .collect();
                compute_prepared_gram(&prepared, cfg)
            }
            PairKernel::Features => GramMatrix::from_fn(reps.len(), |i, j| eval(kernel, &reps[i], &reps[j])),
        }
    }

    fn from_parts(kernel: PairKernel, model: SvmModel, support: Vec<QuestionPair>) -> Result<Self> {
        if support.len() != model.support_indices.len() {
            return Err(SvmError::Format(format!(
                "{} support pairs for {} support indices",
                support.len(),
                model.support_indices.len()
            )));
        }
        let represented = support
            .par_iter()
            .map(|p| represent(&kernel, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coef: model.support_coefficients(),
            kernel,
            model,
            support,
            represented,
        })
    }

    /// Kernel values between `p` and every support pair.
    pub fn kernel_row(&self, p: &QuestionPair) -> Result<Vec<f64>> {
        let r = represent(&self.kernel, p)?;
        Ok(self.represented.iter().map(|s| eval(&self.kernel, s, &r)).collect())
    }

    pub fn score(&self, p: &QuestionPair) -> Result<f64> {
        let row = self.kernel_row(p)?;
        debug_assert_eq!(row.len(), self.coef.len());
        decision_value(&self.model, &row)
    }

    pub fn predict(&self, p: &QuestionPair) -> Result<bool> {
        Ok(self.score(p)? >= 0.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kernel: self.kernel,
            kernel_hash: format!("{:016x}", self.kernel.fingerprint()),
            model: self.model.clone(),
            support: self.support.clone(),
        };
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, &file).map_err(|e| SvmError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let file: ModelFile =
            serde_json::from_reader(r).map_err(|e| SvmError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(SvmError::Format(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.kernel_hash != format!("{:016x}", file.kernel.fingerprint()) {
            return Err(SvmError::Format("kernel hash does not match kernel config".into()));
        }
        Self::from_parts(file.kernel, file.model, file.support)
    }
}

/// Outcome counts of a labeling run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelReport {
    pub labeled: usize,
    pub failures: usize,
}

/// Labels every pair of an unlabeled dataset with `score(p) >= threshold`,
/// keeping the score. Pairs whose score fails are skipped and counted.
/// Scoring runs in parallel; output order follows the input.
pub fn label_dataset<F, E>(
    unlabeled: &Dataset,
    threshold: f64,
    score: F,
) -> Result<(Dataset, LabelReport)>
where
    F: Fn(&QuestionPair) -> std::result::Result<f64, E> + Sync,
    E: Send,
{
    if unlabeled.split != Split::Unlabeled {
        return Err(SvmError::NotUnlabeled(unlabeled.split));
    }
    let scored: Vec<Option<f64>> = unlabeled.pairs.par_iter().map(|p| score(p).ok()).collect();
    let mut report = LabelReport::default();
    let mut pairs = Vec::with_capacity(scored.len());
    for (p, s) in unlabeled.pairs.iter().zip(scored) {
        match s {
            Some(s) => {
                report.labeled += 1;
                pairs.push(QuestionPair::automatic(p.q1.clone(), p.q2.clone(), s >= threshold, s));
            }
            None => report.failures += 1,
        }
    }
    let ds = Dataset::new(format!("{}-automatic", unlabeled.name), pairs, Split::Train)?;
    Ok((ds, report))
}

/// [`label_dataset`] with an SVM labeler (threshold 0).
pub fn label_corpus(model: &PairSvm, unlabeled: &Dataset) -> Result<(Dataset, LabelReport)> {
    label_dataset(unlabeled, 0.0, |p| model.score(p))
}
