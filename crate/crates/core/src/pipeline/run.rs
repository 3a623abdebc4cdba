use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_unlabeled_pairs, load_jsonl, load_quora_tsv, save_jsonl, Bm25Index};
use crate::eval::save_predictions;

/// The four splits of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub unlabeled: Dataset,
    /// Hidden labels of the unlabeled pairs, when the corpus is generated.
    pub unlabeled_truth: Option<Vec<bool>>,
}

impl ExperimentData {
    pub fn from_synthetic(c: SyntheticCorpus) -> Self {
        Self {
            train: c.train,
            dev: c.dev,
            test: c.test,
            unlabeled: c.unlabeled,
            unlabeled_truth: Some(c.unlabeled_truth),
        }
    }

    /// The first `gs_train_size` gold pairs (all when 0).
    pub fn gold(&self, cfg: &ExperimentConfig) -> Dataset {
        prefix_or_all(&self.train, cfg.gs_train_size)
    }

    /// The first `automatic_size` unlabeled pairs (all when 0).
    pub fn pool(&self, cfg: &ExperimentConfig) -> Dataset {
        prefix_or_all(&self.unlabeled, cfg.automatic_size)
    }

    pub fn pool_truth(&self, cfg: &ExperimentConfig) -> Option<&[bool]> {
        let n = self.pool(cfg).len();
        self.unlabeled_truth.as_deref().map(|t| &t[..n])
    }

    pub fn sets(&self, cfg: &ExperimentConfig) -> EvalSets<'_> {
        EvalSets {
            dev: &self.dev,
            test: &self.test,
            ranking: cfg.ranking,
        }
    }
}

fn prefix_or_all(ds: &Dataset, n: usize) -> Dataset {
    if n == 0 {
        ds.clone()
    } else {
        ds.prefix(n)
    }
}

fn load_split(path: &Path, split: Split) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "tsv") {
        let (mut ds, _) = load_quora_tsv(path)?;
        ds.split = split;
        ds.validate()?;
        Ok(ds)
    } else {
        Ok(load_jsonl(path, split)?)
    }
}

/// Loads or generates the splits described by the config. A generated
/// corpus is seeded by `seed + data.synthetic.seed`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let d = &cfg.data;
    if let Some(s) = &d.synthetic {
        let s = SyntheticConfig {
            seed: s.seed.wrapping_add(cfg.seed),
            ..*s
        };
        return Ok(ExperimentData::from_synthetic(generate_synthetic(&s)?));
    }
    let train_path = d
        .train
        .as_deref()
        .ok_or_else(|| PipelineError::Config("data.train is required without data.synthetic".into()))?;
    let mut train = load_split(train_path, Split::Train)?;
    let carve = |fraction: f64, name: &str, split: Split, train: &mut Dataset| -> Dataset {
        let n = (train.len() as f64 * fraction).round() as usize;
        let rest = train.pairs.split_off(train.len() - n);
        Dataset {
            name: format!("{}-{name}", train.name),
            pairs: rest,
            split,
        }
    };
    if d.dev.is_none() || d.test.is_none() {
        train.pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.stage_seed(Stage::Init)));
    }
    let dev = match &d.dev {
        Some(p) => load_split(p, Split::Dev)?,
        None => carve(d.dev_fraction, "dev", Split::Dev, &mut train),
    };
    let test = match &d.test {
        Some(p) => load_split(p, Split::Test)?,
        None => carve(d.test_fraction, "test", Split::Test, &mut train),
    };
    let unlabeled = match &d.unlabeled {
        Some(p) => load_jsonl(p, Split::Unlabeled)?,
        None => {
            let mut seen = HashSet::new();
            let questions: Vec<_> = train
                .pairs
                .iter()
                .flat_map(|p| [&p.q1, &p.q2])
                .filter(|q| seen.insert(q.id.clone()))
                .cloned()
                .collect();
            let queries: Vec<_> = train.pairs.iter().map(|p| p.q1.clone()).collect();
            let k = if questions.is_empty() { 0 } else { d.bm25_candidates };
            let index = Bm25Index::new(questions);
            generate_unlabeled_pairs(&format!("{}-bm25", train.name), &queries, &index, k)?
        }
    };
    Ok(ExperimentData {
        train,
        dev,
        test,
        unlabeled,
        unlabeled_truth: None,
    })
}

/// A directory whose artifact names all carry the config hash.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub hash: String,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>, cfg: &ExperimentConfig) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            hash: cfg.short_hash(),
        })
    }

    /// `<root>/<stem>-<hash>.<ext>`
    pub fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.root.join(format!("{stem}-{}.{ext}", self.hash))
    }

    pub fn config(&self) -> PathBuf {
        self.path("config", "toml")
    }

    pub fn vocab(&self) -> PathBuf {
        self.path("vocab", "txt")
    }

    pub fn split(&self, split: Split) -> PathBuf {
        self.path(&split.to_string(), "jsonl")
    }

    pub fn labeler(&self, kind: LabelerKind) -> PathBuf {
        let ext = if kind.encoder().is_some() { "ckpt" } else { "json" };
        self.path(&format!("labeler-{}", kind.name().to_lowercase()), ext)
    }

    pub fn automatic(&self) -> PathBuf {
        self.path("automatic", "jsonl")
    }

    pub fn checkpoint(&self, stem: &str) -> PathBuf {
        self.path(stem, "ckpt")
    }

    pub fn predictions(&self, stage: &str, split: Split) -> PathBuf {
        self.path(&format!("predictions-{}-{split}", stage_slug(stage)), "csv")
    }

    pub fn report(&self) -> PathBuf {
        self.path("report", "json")
    }

    pub fn curve(&self) -> PathBuf {
        self.path("curve", "csv")
    }

    pub fn write_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        std::fs::write(self.config(), cfg.to_toml())?;
        Ok(())
    }

    pub fn write_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.vocab())?);
        vocab.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_vocab(&self) -> Result<Vocabulary> {
        let path = self.vocab();
        let file = File::open(&path).map_err(|_| missing(&path))?;
        Ok(Vocabulary::read(BufReader::new(file))?)
    }

    pub fn write_data(&self, data: &ExperimentData) -> Result<()> {
        for ds in [&data.train, &data.dev, &data.test, &data.unlabeled] {
            save_jsonl(ds, &self.split(ds.split))?;
        }
        Ok(())
    }

    pub fn write_predictions(&self, p: &StagePredictions) -> Result<()> {
        save_predictions(&self.predictions(&p.stage, Split::Dev), &p.dev)?;
        save_predictions(&self.predictions(&p.stage, Split::Test), &p.test)?;
        Ok(())
    }

    pub fn write_report(&self, report: &RunReport) -> Result<()> {
        let w = BufWriter::new(File::create(self.report())?);
        serde_json::to_writer_pretty(w, report).map_err(std::io::Error::from)?;
        Ok(())
    }

    pub fn read_report(&self) -> Result<RunReport> {
        let path = self.report();
        let file = File::open(&path).map_err(|_| missing(&path))?;
        Ok(serde_json::from_reader(BufReader::new(file)).map_err(std::io::Error::from)?)
    }
}

/// Error for an artifact a previous command should have written.
pub fn missing(path: &Path) -> PipelineError {
    PipelineError::MissingArtifact(path.display().to_string())
}

/// `CNN(TK)*` → `cnn-tk-ft`
fn stage_slug(stage: &str) -> String {
    let mut s = String::new();
    for c in stage.chars() {
        match c {
            '(' | ',' => s.push('-'),
            '*' => s.push_str("-ft"),
            c if c.is_ascii_alphanumeric() || c == '-' => s.push(c.to_ascii_lowercase()),
            _ => {}
        }
    }
    s
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(EvalError::from)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs the whole experiment: labeler, automatic labels, gold-only
/// network, pre-training and fine-tuning, plus voting and the learning
/// curve when configured. With a run directory every artifact is written.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    dir: Option<&RunDir>,
) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let gold = data.gold(cfg);
    let pool = data.pool(cfg);
    let sets = data.sets(cfg);
    let vocab = build_vocabulary(&gold, &pool, cfg)?;
    let mut report = RunReport::new(cfg);
    let mut predictions = Vec::new();

    let labeler = train_labeler(cfg.labeler, &gold, cfg, &vocab)?;
    let lname = cfg.labeler.name();
    let (row, pred) = evaluate_labeler(lname, &labeler, (gold.len(), 0), sets)?;
    report.rows.push(row);
    predictions.push(pred);
    let (automatic, _) = labeler.label_unlabeled(&pool)?;
    if let Some(truth) = data.pool_truth(cfg) {
        if automatic.len() == truth.len() && !truth.is_empty() {
            let hits = automatic.pairs.iter().zip(truth).filter(|(p, &t)| p.label == Some(t)).count();
            report.labeler_agreement = Some(hits as f64 / truth.len() as f64);
        }
    }

    let ename = encoder_name(cfg.encoder);
    let gold_only = match &labeler {
        Labeler::Neural { model, .. } if model.kind == cfg.encoder && cfg.baseline.patience.is_none() => {
            model.clone()
        }
        _ => train_gold_only(cfg.encoder, &gold, Some(&data.dev), cfg, &vocab)?.0,
    };
    let (row, gold_pred) = evaluate_model(&ename, &gold_only, &vocab, (gold.len(), 0), sets)?;
    report.rows.push(row);

    let tag = format!("{ename}({lname})");
    let pf = pretrain_finetune(&automatic, &gold, cfg, &vocab, &tag, sets)?;
    report.rows.extend(pf.report.rows.iter().cloned());

    if cfg.vote {
        let a = &predictions[0];
        let score = |rows: &[PredictionRow]| rows.iter().map(|r| r.score).collect::<Vec<_>>();
        let cal_a = MinMax::fit(&score(&a.dev))?;
        let cal_b = MinMax::fit(&score(&gold_pred.dev))?;
        let dev = vote(&score(&a.dev), &score(&gold_pred.dev), cal_a, cal_b)?;
        let test = vote(&score(&a.test), &score(&gold_pred.test), cal_a, cal_b)?;
        let (row, pred) = evaluate_scores(
            &format!("vote({lname},{ename})"),
            &dev,
            &test,
            0.5,
            (gold.len(), 0),
            sets,
        )?;
        report.rows.push(row);
        predictions.push(pred);
    }
    predictions.push(gold_pred);
    predictions.extend(pf.predictions.iter().cloned());

    let curve = if cfg.curve_sizes.is_empty() {
        None
    } else {
        Some(learning_curve(&labeler, &gold, &pool, &cfg.curve_sizes, cfg, &vocab, sets)?)
    };

    if let Some(dir) = dir {
        dir.write_config(cfg)?;
        dir.write_vocab(&vocab)?;
        labeler.save(&dir.labeler(cfg.labeler))?;
        save_jsonl(&automatic, &dir.automatic())?;
        save_checkpoint(&gold_only, &vocab, &dir.checkpoint("gold-only"))?;
        save_checkpoint(&pf.pretrained, &vocab, &dir.checkpoint("pretrained"))?;
        save_checkpoint(&pf.finetuned, &vocab, &dir.checkpoint("finetuned"))?;
        for p in &predictions {
            dir.write_predictions(p)?;
        }
        if let Some(rows) = &curve {
            write_curve_csv(rows, BufWriter::new(File::create(dir.curve())?))?;
        }
        dir.write_report(&report)?;
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
