use std::path::Path;
use std::process::{Command, Output};

fn tkdistill(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tkdistill"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TKDISTILL_CONFIG")
        .env_remove("TKDISTILL_RUN_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
name = "cli"
seed = 3
vote = true
curve_sizes = [0, 20, 40]

[dims]
word_dim = 8
overlap_dim = 3
window = 3
filters = 6
lstm_hidden = 4
mlp_hidden = 8
max_len = 20

[baseline]
epochs = 2
batch_size = 8
lr = 0.001

[pretrain]
epochs = 1
batch_size = 8
lr = 0.001

[finetune]
epochs = 1
batch_size = 8
lr = 0.0001

[data.synthetic]
train = 30
dev = 20
test = 20
unlabeled = 40
"#;

#[test]
fn unknown_flag_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = tkdistill(&["prepare", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = tkdistill(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(tkdistill(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn evaluate_ranking_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "query_id,candidate_id,score,gold\n\
               q1,c1,0.9,1\nq1,c2,0.8,0\nq1,c3,0.7,1\n\
               q2,c4,0.9,0\nq2,c5,0.3,1\n";
    std::fs::write(dir.path().join("p.csv"), csv).unwrap();
    let o = tkdistill(&["evaluate", "--pred", "p.csv", "--ranking"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("MAP 0.6667"), "{}", stdout(&o));
    assert!(stdout(&o).contains("accuracy 0.4000"), "{}", stdout(&o));

    let o = tkdistill(&["evaluate", "--pred", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_cnn_seed_7() {
    let dir = tempfile::tempdir().unwrap();
    let o = tkdistill(&["gradcheck", "--arch", "cnn", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("max relative error")).unwrap();
    let err: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-4, "{line}");
}

#[test]
fn single_class_training_file_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..4)
        .map(|i| {
            format!("{{\"id1\":\"a{i}\",\"id2\":\"b{i}\",\"text1\":\"renew visa {i}\",\"text2\":\"visa office\",\"label\":1}}\n")
        })
        .collect();
    std::fs::write(dir.path().join("one.jsonl"), rows).unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[data]\ntrain = \"one.jsonl\"\ndev_fraction = 0.25\ntest_fraction = 0.25\n",
    )
    .unwrap();
    let o = tkdistill(&["train-svm", "--config", "c.toml", "--kernel", "fv"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("degenerate labels"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = tkdistill(&["prepare", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(dir.path().join("bad.toml"), "[finetune]\nlr = 0.5\n").unwrap();
    let o = tkdistill(&["prepare", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("smaller"), "{}", stderr(&o));
}

#[test]
fn stages_chain_through_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("small.toml"), SMALL).unwrap();
    let base = ["--config", "small.toml", "--run-dir", "run"];
    let step = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(base);
        args.extend(extra);
        let o = tkdistill(&args, cwd);
        assert!(o.status.success(), "{cmd}: {}{}", stdout(&o), stderr(&o));
        o
    };

    let o = tkdistill(&["pretrain", "--config", "small.toml", "--run-dir", "run"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run `label` first"), "{}", stderr(&o));

    let o = step("prepare", &[]);
    assert!(stdout(&o).contains("train 30  dev 20  test 20  unlabeled 40"), "{}", stdout(&o));
    step("train-svm", &["--kernel", "tk"]);
    let o = step("label", &[]);
    assert!(stdout(&o).contains("labeled 40 pairs with TK"), "{}", stdout(&o));

    let entries = || {
        let mut v: Vec<_> = std::fs::read_dir(cwd.join("run"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let automatic = entries().into_iter().find(|n| n.starts_with("automatic-")).unwrap();
    let hash = automatic.trim_start_matches("automatic-").trim_end_matches(".jsonl").to_owned();
    assert!(entries().iter().all(|n| n.contains(&hash)), "{:?}", entries());
    let first = std::fs::read(cwd.join("run").join(&automatic)).unwrap();
    step("label", &[]);
    assert_eq!(std::fs::read(cwd.join("run").join(&automatic)).unwrap(), first);

    step("pretrain", &[]);
    let o = step("finetune", &[]);
    let out = stdout(&o);
    let ft_line = out.lines().find(|l| l.starts_with("CNN(TK)*")).unwrap();
    let reported: f64 = ft_line.split_whitespace().nth(6).unwrap().parse().unwrap();
    let pred = format!("run/predictions-cnn-tk-ft-test-{hash}.csv");
    let o = tkdistill(&["evaluate", "--pred", &pred], cwd);
    assert!(stdout(&o).contains(&format!("accuracy {reported:.4}")), "{} vs {ft_line}", stdout(&o));
    let report = std::fs::read_to_string(cwd.join(format!("run/report-{hash}.json"))).unwrap();
    assert!(report.contains("\"CNN(TK)*\""));

    let o = step("sweep", &[]);
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("dev accuracy")).count(), 3);
    let curve = std::fs::read_to_string(cwd.join(format!("run/curve-{hash}.csv"))).unwrap();
    assert!(curve.starts_with("size,dev_accuracy,test_accuracy\n0,"));
    let o = step("vote", &[]);
    assert!(stdout(&o).contains("vote(TK,CNN)"), "{}", stdout(&o));

    let o = step("label", &["--seed", "4"]);
    assert!(o.status.success());
    assert!(entries().iter().any(|n| n.starts_with("automatic-") && !n.contains(&hash)));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = tkdistill(&["selftest"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok")).count(), 3);
}
