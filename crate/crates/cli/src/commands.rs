use std::fs::File;
use std::io::BufWriter;

use tkdistill::corpus::{load_jsonl, save_jsonl, Dataset, Split, Vocabulary};
use tkdistill::eval::load_predictions;
use tkdistill::neural::{
    encode_dataset, gradient_check, load_checkpoint, save_checkpoint, train, ModelDims, PairClassifier,
};
use tkdistill::pipeline::{
    build_vocabulary, encoder_name, evaluate_labeler, evaluate_model, evaluate_scores, generate_synthetic,
    init_model, learning_curve, load_data, missing, rows_metrics, train_gold_only,
    train_labeler, vote, write_curve_csv, ExperimentConfig, ExperimentData, Labeler, LabelerKind, MinMax,
    PipelineError, ReportRow, RunDir, RunReport, Stage, SyntheticConfig,
};

use crate::{selftest, ArchArg, Command, Common, Failure, KernelArg};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(c) => prepare(&c),
        Command::TrainSvm { common, kernel } => train_svm(&common, kernel),
        Command::Label { common, kernel } => label(&common, kernel),
        Command::Pretrain(c) => pretrain(&c),
        Command::Finetune(c) => finetune(&c),
        Command::Evaluate { pred, ranking, threshold } => evaluate(&pred, ranking, threshold),
        Command::Sweep(c) => sweep(&c),
        Command::Vote(c) => vote_cmd(&c),
        Command::Gradcheck { arch, seed } => gradcheck(arch, seed),
        Command::Selftest => selftest::run(),
    }
}

/// Loaded config with command-line overrides applied, its run directory
/// and data.
struct Context {
    cfg: ExperimentConfig,
    dir: RunDir,
    data: ExperimentData,
}

impl Context {
    fn new(c: &Common, labeler: Option<LabelerKind>) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if let Some(arch) = c.arch {
            cfg.encoder = arch.into();
        }
        if let Some(n) = c.gs_size {
            cfg.gs_train_size = n;
        }
        if let Some(n) = c.automatic_size {
            cfg.automatic_size = n;
        }
        if let Some(kind) = labeler {
            cfg.labeler = kind;
        }
        cfg.ranking |= c.ranking;
        cfg.validate()?;
        let data = load_data(&cfg)?;
        let dir = RunDir::create(&c.run_dir, &cfg)?;
        dir.write_config(&cfg)?;
        Ok(Self { cfg, dir, data })
    }

    fn gold(&self) -> Dataset {
        self.data.gold(&self.cfg)
    }

    fn pool(&self) -> Dataset {
        self.data.pool(&self.cfg)
    }

    fn vocab(&self) -> Result<Vocabulary> {
        let vocab = build_vocabulary(&self.gold(), &self.pool(), &self.cfg)?;
        self.dir.write_vocab(&vocab)?;
        Ok(vocab)
    }

    /// The labeler stored in the run directory, trained (and stored) first
    /// when absent.
    fn labeler(&self, vocab: &Vocabulary) -> Result<Labeler> {
        let path = self.dir.labeler(self.cfg.labeler);
        if path.exists() {
            return Ok(Labeler::load(self.cfg.labeler, &path, vocab)?);
        }
        let labeler = train_labeler(self.cfg.labeler, &self.gold(), &self.cfg, vocab)?;
        labeler.save(&path)?;
        Ok(labeler)
    }

    fn tag(&self) -> String {
        format!("{}({})", encoder_name(self.cfg.encoder), self.cfg.labeler.name())
    }

    fn print_row(&self, row: &ReportRow) {
        let m = &row.metrics;
        let mut line = format!(
            "{:<14} dev accuracy {:.4}  test accuracy {:.4}",
            row.stage, m.dev_accuracy, m.test_accuracy
        );
        if let (Some(d), Some(t)) = (m.dev_map, m.test_map) {
            line.push_str(&format!("  dev MAP {d:.4}  test MAP {t:.4}"));
        }
        println!("{line}");
    }
}

fn prepare(c: &Common) -> Result<()> {
    let ctx = Context::new(c, None)?;
    ctx.dir.write_data(&ctx.data)?;
    ctx.vocab()?;
    let d = &ctx.data;
    println!(
        "train {}  dev {}  test {}  unlabeled {}  → {}",
        d.train.len(),
        d.dev.len(),
        d.test.len(),
        d.unlabeled.len(),
        ctx.dir.root.display()
    );
    println!("config hash {}", ctx.cfg.hash());
    Ok(())
}

fn train_svm(c: &Common, kernel: KernelArg) -> Result<()> {
    let kind = match kernel {
        KernelArg::Tk => LabelerKind::Tk,
        KernelArg::Fv => LabelerKind::Fv,
    };
    let ctx = Context::new(c, Some(kind))?;
    let vocab = ctx.vocab()?;
    let gold = ctx.gold();
    let labeler = train_labeler(kind, &gold, &ctx.cfg, &vocab)?;
    labeler.save(&ctx.dir.labeler(kind))?;
    let (row, pred) = evaluate_labeler(kind.name(), &labeler, (gold.len(), 0), ctx.data.sets(&ctx.cfg))?;
    ctx.dir.write_predictions(&pred)?;
    ctx.print_row(&row);
    Ok(())
}

fn label(c: &Common, kernel: Option<KernelArg>) -> Result<()> {
    let kind = kernel.map(|k| match k {
        KernelArg::Tk => LabelerKind::Tk,
        KernelArg::Fv => LabelerKind::Fv,
    });
    let ctx = Context::new(c, kind)?;
    let vocab = ctx.vocab()?;
    let labeler = ctx.labeler(&vocab)?;
    let pool = ctx.pool();
    let (automatic, report) = labeler.label_unlabeled(&pool)?;
    save_jsonl(&automatic, &ctx.dir.automatic()).map_err(PipelineError::from)?;
    let positives = automatic.pairs.iter().filter(|p| p.label == Some(true)).count();
    println!(
        "labeled {} pairs with {} ({} positive, {} failures) → {}",
        report.labeled,
        ctx.cfg.labeler.name(),
        positives,
        report.failures,
        ctx.dir.automatic().display()
    );
    if let Some(truth) = ctx.data.pool_truth(&ctx.cfg) {
        if report.failures == 0 && !truth.is_empty() {
            let hits = automatic.pairs.iter().zip(truth).filter(|(p, &t)| p.label == Some(t)).count();
            println!("agreement with generator labels {:.4}", hits as f64 / truth.len() as f64);
        }
    }
    Ok(())
}

fn load_automatic(ctx: &Context) -> Result<Dataset> {
    let path = ctx.dir.automatic();
    if !path.exists() {
        return Err(Failure::User(format!("{} (run `label` first)", missing(&path))));
    }
    Ok(load_jsonl(&path, Split::Train).map_err(PipelineError::from)?)
}

fn pretrain(c: &Common) -> Result<()> {
    let ctx = Context::new(c, None)?;
    let vocab = ctx.vocab()?;
    let automatic = load_automatic(&ctx)?;
    let mut model = init_model(ctx.cfg.encoder, &ctx.cfg, &vocab)?;
    let examples = encode_dataset(&automatic, &vocab, ctx.cfg.dims.max_len);
    let outcome = train(&mut model, &examples, &ctx.cfg.schedule(Stage::Pretrain), None)
        .map_err(PipelineError::from)?;
    save_checkpoint(&model, &vocab, &ctx.dir.checkpoint("pretrained")).map_err(PipelineError::from)?;
    let (row, pred) = evaluate_model(&ctx.tag(), &model, &vocab, (0, automatic.len()), ctx.data.sets(&ctx.cfg))?;
    ctx.dir.write_predictions(&pred)?;
    println!("pre-trained on {} automatic pairs, {} steps", automatic.len(), outcome.steps);
    ctx.print_row(&row);
    Ok(())
}

fn finetune(c: &Common) -> Result<()> {
    let ctx = Context::new(c, None)?;
    let vocab = ctx.vocab()?;
    let path = ctx.dir.checkpoint("pretrained");
    if !path.exists() {
        return Err(Failure::User(format!("{} (run `pretrain` first)", missing(&path))));
    }
    let pretrained: PairClassifier = load_checkpoint(&path, Some(&vocab)).map_err(PipelineError::from)?;
    let automatic = load_automatic(&ctx)?;
    let gold = ctx.gold();
    let mut model = pretrained.clone();
    let examples = encode_dataset(&gold, &vocab, ctx.cfg.dims.max_len);
    let outcome = train(&mut model, &examples, &ctx.cfg.schedule(Stage::Finetune), None)
        .map_err(PipelineError::from)?;
    save_checkpoint(&model, &vocab, &ctx.dir.checkpoint("finetuned")).map_err(PipelineError::from)?;
    let sets = ctx.data.sets(&ctx.cfg);
    let tag = ctx.tag();
    let (pre_row, pre_pred) = evaluate_model(&tag, &pretrained, &vocab, (0, automatic.len()), sets)?;
    let (ft_row, ft_pred) = evaluate_model(&format!("{tag}*"), &model, &vocab, (gold.len(), automatic.len()), sets)?;
    ctx.dir.write_predictions(&pre_pred)?;
    ctx.dir.write_predictions(&ft_pred)?;
    let mut report = RunReport::new(&ctx.cfg);
    report.rows = vec![pre_row, ft_row];
    ctx.dir.write_report(&report)?;
    println!("fine-tuned on {} gold pairs, {} steps", gold.len(), outcome.steps);
    for row in &report.rows {
        ctx.print_row(row);
    }
    Ok(())
}

fn evaluate(pred: &std::path::Path, ranking: bool, threshold: f64) -> Result<()> {
    let rows = load_predictions(pred).map_err(PipelineError::from)?;
    let (acc, map) = rows_metrics(&rows, threshold, ranking)?;
    println!("accuracy {acc:.4}");
    if let Some(map) = map {
        println!("MAP {map:.4}");
    }
    Ok(())
}

fn sweep(c: &Common) -> Result<()> {
    let ctx = Context::new(c, None)?;
    let vocab = ctx.vocab()?;
    let labeler = ctx.labeler(&vocab)?;
    let pool = ctx.pool();
    let sizes = if ctx.cfg.curve_sizes.is_empty() {
        let n = pool.len();
        vec![0, n / 4, n / 2, n]
    } else {
        ctx.cfg.curve_sizes.clone()
    };
    let rows = learning_curve(&labeler, &ctx.gold(), &pool, &sizes, &ctx.cfg, &vocab, ctx.data.sets(&ctx.cfg))?;
    let file = File::create(ctx.dir.curve()).map_err(PipelineError::from)?;
    write_curve_csv(&rows, BufWriter::new(file))?;
    for r in &rows {
        println!("{:>8}  dev accuracy {:.4}  test accuracy {:.4}", r.size, r.dev_accuracy, r.test_accuracy);
    }
    println!("→ {}", ctx.dir.curve().display());
    Ok(())
}

fn vote_cmd(c: &Common) -> Result<()> {
    let ctx = Context::new(c, None)?;
    let vocab = ctx.vocab()?;
    let labeler = ctx.labeler(&vocab)?;
    let gold = ctx.gold();
    let sets = ctx.data.sets(&ctx.cfg);
    let path = ctx.dir.checkpoint("gold-only");
    let network = if path.exists() {
        load_checkpoint(&path, Some(&vocab)).map_err(PipelineError::from)?
    } else {
        let (m, _) = train_gold_only(ctx.cfg.encoder, &gold, Some(&ctx.data.dev), &ctx.cfg, &vocab)?;
        save_checkpoint(&m, &vocab, &path).map_err(PipelineError::from)?;
        m
    };
    let lname = ctx.cfg.labeler.name();
    let ename = encoder_name(ctx.cfg.encoder);
    let (a_row, a) = evaluate_labeler(lname, &labeler, (gold.len(), 0), sets)?;
    let (b_row, b) = evaluate_model(&ename, &network, &vocab, (gold.len(), 0), sets)?;
    let scores = |rows: &[tkdistill::eval::PredictionRow]| rows.iter().map(|r| r.score).collect::<Vec<_>>();
    let cal_a = MinMax::fit(&scores(&a.dev))?;
    let cal_b = MinMax::fit(&scores(&b.dev))?;
    let dev = vote(&scores(&a.dev), &scores(&b.dev), cal_a, cal_b)?;
    let test = vote(&scores(&a.test), &scores(&b.test), cal_a, cal_b)?;
    let (row, pred) = evaluate_scores(&format!("vote({lname},{ename})"), &dev, &test, 0.5, (gold.len(), 0), sets)?;
    for p in [&a, &b, &pred] {
        ctx.dir.write_predictions(p)?;
    }
    for r in [&a_row, &b_row, &row] {
        ctx.print_row(r);
    }
    Ok(())
}

fn gradcheck(arch: ArchArg, seed: u64) -> Result<()> {
    let data = generate_synthetic(&SyntheticConfig {
        train: 4,
        dev: 0,
        test: 0,
        unlabeled: 0,
        seed,
        ..SyntheticConfig::default()
    })?
    .train;
    let vocab = Vocabulary::build(&data, 1).map_err(PipelineError::from)?;
    let cfg = ExperimentConfig {
        seed,
        dims: ModelDims::default(),
        ..ExperimentConfig::default()
    };
    let model = init_model(arch.into(), &cfg, &vocab)?;
    let batch = encode_dataset(&data, &vocab, cfg.dims.max_len);
    let report = gradient_check(&model, &batch, 1e-5, 12, seed).map_err(PipelineError::from)?;
    for t in &report.tensors {
        println!(
            "{:<22} checked {:>3}  kinks {:>2}  max rel error {:.3e}",
            t.name, t.checked, t.kinks, t.max_rel_error
        );
    }
    println!("max relative error {:.3e}", report.max_rel_error);
    if report.passed(1e-4) {
        Ok(())
    } else {
        Err(Failure::Internal(format!(
            "gradient check failed: max relative error {:.3e} ≥ 1e-4",
            report.max_rel_error
        )))
    }
}
