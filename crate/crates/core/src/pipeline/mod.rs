//! Weak supervision end to end: train a labeler on gold pairs, label the
//! unlabeled corpus, pre-train a network on the automatic labels and
//! fine-tune it on gold. Self-training, FV labelers, voting and
//! learning-curve sweeps are configurations of the same stages.

mod config;
mod run;
mod synthetic;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Dataset, QuestionPair, Split, Vocabulary};
use crate::eval::{self, EvalError, PredictionRow};
use crate::kernelsvm::{label_dataset, LabelReport, PairKernel, PairSvm, SvmError};
use crate::neural::{
    encode_dataset, forward_pair, load_checkpoint, load_embeddings, save_checkpoint, train,
    EncoderKind, NeuralError, PairClassifier, PairExample, TrainOutcome,
};

pub use config::{DataConfig, ExperimentConfig, LabelerKind, Stage};
pub use run::{load_data, missing, run_experiment, write_curve_csv, ExperimentData, RunDir};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticCorpus};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0} has unlabeled pairs")]
    Unlabeled(String),
    #[error("length mismatch: {0} scores vs {1} scores")]
    LengthMismatch(usize, usize),
    #[error("missing artifact {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// A trained model that scores pairs; `label(p) = score(p) >= threshold`.
#[derive(Debug, Clone)]
pub enum Labeler {
    TkSvm(PairSvm),
    FvSvm(PairSvm),
    Neural { model: PairClassifier, vocab: Vocabulary },
}

impl Labeler {
    pub fn kind(&self) -> LabelerKind {
        match self {
            Labeler::TkSvm(_) => LabelerKind::Tk,
            Labeler::FvSvm(_) => LabelerKind::Fv,
            Labeler::Neural { model, .. } => match model.kind {
                EncoderKind::Cnn => LabelerKind::Cnn,
                EncoderKind::Lstm => LabelerKind::Lstm,
            },
        }
    }

    /// 0 for SVM decision values, 0.5 for probabilities.
    pub fn threshold(&self) -> f64 {
        match self {
            Labeler::TkSvm(_) | Labeler::FvSvm(_) => 0.0,
            Labeler::Neural { .. } => 0.5,
        }
    }

    pub fn score(&self, p: &QuestionPair) -> Result<f64> {
        match self {
            Labeler::TkSvm(m) | Labeler::FvSvm(m) => Ok(m.score(p)?),
            Labeler::Neural { model, vocab } => Ok(forward_pair(p, model, vocab)?),
        }
    }

    pub fn label(&self, p: &QuestionPair) -> Result<bool> {
        Ok(self.score(p)? >= self.threshold())
    }

    /// Scores of every pair, computed in parallel, in dataset order.
    pub fn scores(&self, ds: &Dataset) -> Result<Vec<f64>> {
        ds.pairs.par_iter().map(|p| self.score(p)).collect()
    }

    /// Labels an unlabeled dataset; pairs that fail to score are skipped
    /// and counted in the report.
    pub fn label_unlabeled(&self, unlabeled: &Dataset) -> Result<(Dataset, LabelReport)> {
        Ok(label_dataset(unlabeled, self.threshold(), |p| self.score(p))?)
    }

    /// SVM labelers are written as JSON, neural ones as checkpoints tied
    /// to their vocabulary.
    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Labeler::TkSvm(m) | Labeler::FvSvm(m) => Ok(m.save(path)?),
            Labeler::Neural { model, vocab } => Ok(save_checkpoint(model, vocab, path)?),
        }
    }

    pub fn load(kind: LabelerKind, path: &Path, vocab: &Vocabulary) -> Result<Self> {
        Ok(match kind {
            LabelerKind::Tk => Labeler::TkSvm(PairSvm::load(path)?),
            LabelerKind::Fv => Labeler::FvSvm(PairSvm::load(path)?),
            LabelerKind::Cnn | LabelerKind::Lstm => Labeler::Neural {
                model: load_checkpoint(path, Some(vocab))?,
                vocab: vocab.clone(),
            },
        })
    }
}

/// Vocabulary over the training-side splits (gold train and unlabeled).
pub fn build_vocabulary(gold: &Dataset, unlabeled: &Dataset, cfg: &ExperimentConfig) -> Result<Vocabulary> {
    Ok(Vocabulary::build_from([gold, unlabeled], cfg.min_count)?)
}

/// Fresh network parameters for the configured encoder, seeded by the
/// experiment seed. Every network of an experiment starts from this draw.
pub fn init_model(kind: EncoderKind, cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<PairClassifier> {
    let seed = cfg.stage_seed(Stage::Init);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = PairClassifier::new(kind, cfg.dims, vocab.len(), &mut rng);
    if let Some(path) = &cfg.embeddings {
        model.embeddings = load_embeddings(path, vocab, &cfg.dims, seed)?;
    }
    Ok(model)
}

fn require_labels(ds: &Dataset) -> Result<()> {
    if ds.labels().is_none() {
        return Err(PipelineError::Unlabeled(ds.name.clone()));
    }
    Ok(())
}

fn encode(ds: &Dataset, vocab: &Vocabulary, cfg: &ExperimentConfig) -> Vec<PairExample> {
    encode_dataset(ds, vocab, cfg.dims.max_len)
}

/// Trains a network from fresh init on gold pairs only.
pub fn train_gold_only(
    kind: EncoderKind,
    gold: &Dataset,
    dev: Option<&Dataset>,
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
) -> Result<(PairClassifier, TrainOutcome)> {
    require_labels(gold)?;
    let mut model = init_model(kind, cfg, vocab)?;
    let schedule = cfg.schedule(Stage::Baseline);
    let dev = dev_examples(&schedule, dev, vocab, cfg);
    let outcome = train(&mut model, &encode(gold, vocab, cfg), &schedule, dev.as_deref())?;
    Ok((model, outcome))
}

fn dev_examples(
    schedule: &crate::neural::TrainSchedule,
    dev: Option<&Dataset>,
    vocab: &Vocabulary,
    cfg: &ExperimentConfig,
) -> Option<Vec<PairExample>> {
    schedule.patience.and(dev).map(|d| encode(d, vocab, cfg))
}

/// Trains a labeler of the given kind on gold pairs.
pub fn train_labeler(
    kind: LabelerKind,
    gold: &Dataset,
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
) -> Result<Labeler> {
    Ok(match kind {
        LabelerKind::Tk => Labeler::TkSvm(PairSvm::train(gold, PairKernel::Tree(cfg.kernel), &cfg.svm_config())?),
        LabelerKind::Fv => Labeler::FvSvm(PairSvm::train(gold, PairKernel::Features, &cfg.svm_config())?),
        LabelerKind::Cnn | LabelerKind::Lstm => {
            let encoder = kind.encoder().expect("neural labeler kinds have an encoder");
            let (model, _) = train_gold_only(encoder, gold, None, cfg, vocab)?;
            Labeler::Neural {
                model,
                vocab: vocab.clone(),
            }
        }
    })
}

/// Trains a labeler on `gold` and labels every pair of `unlabeled` with it.
pub fn weak_supervise(
    gold: &Dataset,
    unlabeled: &Dataset,
    kind: LabelerKind,
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
) -> Result<(Labeler, Dataset)> {
    if unlabeled.split != Split::Unlabeled {
        return Err(SvmError::NotUnlabeled(unlabeled.split).into());
    }
    let labeler = train_labeler(kind, gold, cfg, vocab)?;
    let (automatic, _) = labeler.label_unlabeled(unlabeled)?;
    Ok((labeler, automatic))
}

/// Accuracy (and MAP when ranking) on dev and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub dev_map: Option<f64>,
    pub test_map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub stage: String,
    pub gold_size: usize,
    pub automatic_size: usize,
    /// Decision threshold applied to the persisted scores.
    pub threshold: f64,
    pub metrics: StageMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    /// Agreement of the automatic labels with hidden labels, when known.
    pub labeler_agreement: Option<f64>,
    /// Not persisted: the saved report must not change between re-runs.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            config_hash: cfg.hash(),
            rows: Vec::new(),
            labeler_agreement: None,
            wall_clock_secs: 0.0,
        }
    }

    pub fn row(&self, stage: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.stage == stage)
    }
}

/// Dev and test sets every stage is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct EvalSets<'a> {
    pub dev: &'a Dataset,
    pub test: &'a Dataset,
    pub ranking: bool,
}

/// Scores of one stage on dev and test, as persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePredictions {
    pub stage: String,
    pub dev: Vec<PredictionRow>,
    pub test: Vec<PredictionRow>,
}

pub fn prediction_rows(ds: &Dataset, scores: &[f64]) -> Result<Vec<PredictionRow>> {
    if ds.len() != scores.len() {
        return Err(PipelineError::LengthMismatch(ds.len(), scores.len()));
    }
    ds.pairs
        .iter()
        .zip(scores)
        .map(|(p, &score)| {
            let gold = p.label.ok_or_else(|| PipelineError::Unlabeled(ds.name.clone()))?;
            Ok(PredictionRow {
                query_id: p.q1.id.clone(),
                candidate_id: p.q2.id.clone(),
                score,
                gold,
            })
        })
        .collect()
}

/// Accuracy at `threshold` and, when ranking, MAP over rows grouped by query.
pub fn rows_metrics(rows: &[PredictionRow], threshold: f64, ranking: bool) -> Result<(f64, Option<f64>)> {
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let gold: Vec<bool> = rows.iter().map(|r| r.gold).collect();
    let acc = eval::accuracy_at(&scores, &gold, threshold)?;
    let map = if ranking {
        Some(eval::mean_average_precision(&eval::ranked_lists(rows))?)
    } else {
        None
    };
    Ok((acc, map))
}

/// Builds a report row and the predictions it was computed from.
pub fn evaluate_scores(
    stage: &str,
    dev_scores: &[f64],
    test_scores: &[f64],
    threshold: f64,
    sizes: (usize, usize),
    sets: EvalSets<'_>,
) -> Result<(ReportRow, StagePredictions)> {
    let dev = prediction_rows(sets.dev, dev_scores)?;
    let test = prediction_rows(sets.test, test_scores)?;
    let (dev_accuracy, dev_map) = rows_metrics(&dev, threshold, sets.ranking)?;
    let (test_accuracy, test_map) = rows_metrics(&test, threshold, sets.ranking)?;
    let row = ReportRow {
        stage: stage.to_owned(),
        gold_size: sizes.0,
        automatic_size: sizes.1,
        threshold,
        metrics: StageMetrics {
            dev_accuracy,
            test_accuracy,
            dev_map,
            test_map,
        },
    };
    Ok((
        row,
        StagePredictions {
            stage: stage.to_owned(),
            dev,
            test,
        },
    ))
}

pub fn evaluate_labeler(
    stage: &str,
    labeler: &Labeler,
    sizes: (usize, usize),
    sets: EvalSets<'_>,
) -> Result<(ReportRow, StagePredictions)> {
    let dev = labeler.scores(sets.dev)?;
    let test = labeler.scores(sets.test)?;
    evaluate_scores(stage, &dev, &test, labeler.threshold(), sizes, sets)
}

pub fn evaluate_model(
    stage: &str,
    model: &PairClassifier,
    vocab: &Vocabulary,
    sizes: (usize, usize),
    sets: EvalSets<'_>,
) -> Result<(ReportRow, StagePredictions)> {
    let labeler = Labeler::Neural {
        model: model.clone(),
        vocab: vocab.clone(),
    };
    evaluate_labeler(stage, &labeler, sizes, sets)
}

/// Output of [`pretrain_finetune`].
#[derive(Debug, Clone)]
pub struct PretrainFinetune {
    pub pretrained: PairClassifier,
    pub finetuned: PairClassifier,
    pub pretrain_outcome: TrainOutcome,
    pub finetune_outcome: TrainOutcome,
    /// Exactly two rows: before and after fine-tuning.
    pub report: RunReport,
    pub predictions: Vec<StagePredictions>,
}

/// Stage 1 trains from fresh init on the automatic pairs at the pretrain
/// rate; stage 2 continues on gold at the (smaller) finetune rate.
/// `tag` names the rows, e.g. `CNN(TK)` and `CNN(TK)*`.
pub fn pretrain_finetune(
    automatic: &Dataset,
    gold: &Dataset,
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    tag: &str,
    sets: EvalSets<'_>,
) -> Result<PretrainFinetune> {
    require_labels(automatic)?;
    require_labels(gold)?;
    let mut model = init_model(cfg.encoder, cfg, vocab)?;
    let schedule = cfg.schedule(Stage::Pretrain);
    let dev = dev_examples(&schedule, Some(sets.dev), vocab, cfg);
    let pretrain_outcome = train(&mut model, &encode(automatic, vocab, cfg), &schedule, dev.as_deref())?;
    let pretrained = model.clone();
    let schedule = cfg.schedule(Stage::Finetune);
    let dev = dev_examples(&schedule, Some(sets.dev), vocab, cfg);
    let finetune_outcome = train(&mut model, &encode(gold, vocab, cfg), &schedule, dev.as_deref())?;
    let sizes = (gold.len(), automatic.len());
    let (pre_row, pre_pred) = evaluate_model(tag, &pretrained, vocab, (0, automatic.len()), sets)?;
    let (ft_row, ft_pred) = evaluate_model(&format!("{tag}*"), &model, vocab, sizes, sets)?;
    let mut report = RunReport::new(cfg);
    report.rows = vec![pre_row, ft_row];
    Ok(PretrainFinetune {
        pretrained,
        finetuned: model,
        pretrain_outcome,
        finetune_outcome,
        report,
        predictions: vec![pre_pred, ft_pred],
    })
}

/// Min-max calibration fitted on dev scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(dev_scores: &[f64]) -> Result<Self> {
        if dev_scores.is_empty() {
            return Err(EvalError::Empty.into());
        }
        let min = dev_scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = dev_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    /// Maps into [0, 1], clamping values outside the dev range. A constant
    /// calibration maps everything to 0.5.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.max <= self.min {
            return 0.5;
        }
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Equal-weight average of two min-max normalized score sequences.
pub fn vote(scores_a: &[f64], scores_b: &[f64], cal_a: MinMax, cal_b: MinMax) -> Result<Vec<f64>> {
    if scores_a.len() != scores_b.len() {
        return Err(PipelineError::LengthMismatch(scores_a.len(), scores_b.len()));
    }
    Ok(scores_a
        .iter()
        .zip(scores_b)
        .map(|(&a, &b)| 0.5 * (cal_a.normalize(a) + cal_b.normalize(b)))
        .collect())
}

/// One point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
}

/// For each size, pre-trains on that many automatically labeled pairs and
/// fine-tunes on gold; size 0 is the gold-only network. The labeler labels
/// the largest prefix once, smaller sizes take prefixes of it.
pub fn learning_curve(
    labeler: &Labeler,
    gold: &Dataset,
    unlabeled: &Dataset,
    sizes: &[usize],
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    sets: EvalSets<'_>,
) -> Result<Vec<CurveRow>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(PipelineError::Config("curve sizes must be ascending".into()));
    }
    let largest = sizes.last().copied().unwrap_or(0);
    if largest > unlabeled.len() {
        return Err(PipelineError::Config(format!(
            "curve size {largest} exceeds the {} unlabeled pairs",
            unlabeled.len()
        )));
    }
    let (automatic, _) = labeler.label_unlabeled(&unlabeled.prefix(largest))?;
    let tag = format!("{}({})", encoder_name(cfg.encoder), labeler.kind().name());
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let metrics = if size == 0 {
            let (model, _) = train_gold_only(cfg.encoder, gold, Some(sets.dev), cfg, vocab)?;
            evaluate_model("gold-only", &model, vocab, (gold.len(), 0), sets)?.0.metrics
        } else {
            let run = pretrain_finetune(&automatic.prefix(size), gold, cfg, vocab, &tag, sets)?;
            run.report.rows[1].metrics
        };
        rows.push(CurveRow {
            size,
            dev_accuracy: metrics.dev_accuracy,
            test_accuracy: metrics.test_accuracy,
        });
    }
    Ok(rows)
}

/// Upper-case encoder name used in report rows.
pub fn encoder_name(kind: EncoderKind) -> String {
    kind.to_string().to_uppercase()
}
