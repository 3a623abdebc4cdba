//! Command-line front end: every stage of a distillation experiment reads
//! one config and writes into one run directory.

mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tkdistill::neural::EncoderKind;
use tkdistill::pipeline::PipelineError;

#[derive(Parser)]
#[command(name = "tkdistill", version, about = "Distill tree-kernel SVM labelers into neural question-pair classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate the splits and write them to the run directory
    Prepare(Common),
    /// Train an SVM labeler on the gold training pairs
    TrainSvm {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KernelArg::Tk)]
        kernel: KernelArg,
    },
    /// Label the unlabeled pairs with the configured labeler
    Label {
        #[command(flatten)]
        common: Common,
        /// Use an SVM labeler with this kernel instead of the configured one
        #[arg(long, value_enum)]
        kernel: Option<KernelArg>,
    },
    /// Pre-train a network on the automatic labels
    Pretrain(Common),
    /// Fine-tune the pre-trained network on gold and write the report
    Finetune(Common),
    /// Accuracy (and MAP) of a predictions CSV
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        ranking: bool,
        /// Scores at or above the threshold count as positive
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Learning curve over pre-training sizes, written as CSV
    Sweep(Common),
    /// Equal-weight vote of the labeler and the gold-only network
    Vote(Common),
    /// Finite-difference gradient check of a pair classifier
    Gradcheck {
        #[arg(long, value_enum, default_value_t = ArchArg::Cnn)]
        arch: ArchArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Kernel oracles, SVM optimality and metric fixtures
    Selftest,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment config (TOML)
    #[arg(long, env = "TKDISTILL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "TKDISTILL_RUN_DIR", default_value = "run")]
    pub run_dir: PathBuf,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Gold training pairs to use (0 = all)
    #[arg(long)]
    pub gs_size: Option<usize>,
    /// Unlabeled pairs to label and pre-train on (0 = all)
    #[arg(long)]
    pub automatic_size: Option<usize>,
    /// Also report MAP, grouping pairs by their first question
    #[arg(long)]
    pub ranking: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
pub enum KernelArg {
    Tk,
    Fv,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
pub enum ArchArg {
    Cnn,
    Lstm,
}

impl From<ArchArg> for EncoderKind {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Cnn => EncoderKind::Cnn,
            ArchArg::Lstm => EncoderKind::Lstm,
        }
    }
}

/// Failures of a command: bad input from the user, or something that
/// should not have happened.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        use tkdistill::kernelsvm::SvmError;
        use tkdistill::neural::NeuralError;
        let msg = e.to_string();
        let user = match &e {
            PipelineError::Config(_)
            | PipelineError::Unlabeled(_)
            | PipelineError::LengthMismatch(..)
            | PipelineError::MissingArtifact(_)
            | PipelineError::Corpus(_)
            | PipelineError::Eval(_) => true,
            PipelineError::Svm(s) => matches!(
                s,
                SvmError::DegenerateLabels
                    | SvmError::InvalidLabel(_)
                    | SvmError::Unlabeled
                    | SvmError::NotUnlabeled(_)
                    | SvmError::Config(_)
                    | SvmError::Corpus(_)
                    | SvmError::Format(_)
            ),
            PipelineError::Neural(n) => matches!(
                n,
                NeuralError::Embeddings { .. } | NeuralError::Checkpoint(_) | NeuralError::Schedule(_)
            ),
            PipelineError::Io(io) => matches!(
                io.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
            ),
        };
        if user {
            Failure::User(msg)
        } else {
            Failure::Internal(msg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
