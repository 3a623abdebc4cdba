//! A small neural pair classifier with hand-written gradients: word and
//! overlap embeddings, CNN or BiLSTM sentence encoders (one per question,
//! independent weights), an MLP head, binary cross-entropy and Adam.

mod adam;
mod gradcheck;
mod io;
mod model;
mod tensor;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{gradient_check, GradCheckReport, TensorCheck};
pub use io::{load_checkpoint, load_embeddings, save_checkpoint, save_embeddings, CHECKPOINT_VERSION};
pub use model::{
    bce_loss, bilstm_encode, conv_maxpool_encode, embed_sequence, encode_pair, encode_question,
    forward_pair, mean_bce, overlap_bits, CnnEncoder, EmbeddingTable, EncodedQuestion, Encoder,
    LstmDirection, LstmEncoder, Mlp, PairClassifier, PairExample,
};
pub use tensor::Tensor;
pub use train::{accuracy_on, encode_dataset, predict_probabilities, train, EpochStats, TrainOutcome, TrainSchedule};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("encoder input has no positions")]
    EmptySequence,
    #[error("training pair has no label")]
    Unlabeled,
    #[error("embedding file line {line}: {message}")]
    Embeddings { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Cnn,
    Lstm,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::Lstm => "lstm",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(EncoderKind::Cnn),
            "lstm" | "bilstm" => Ok(EncoderKind::Lstm),
            other => Err(format!("unknown encoder `{other}` (expected cnn or lstm)")),
        }
    }
}

/// Layer sizes. Defaults: 50-d words, 5-d overlap, window 5, 100 filters,
/// 50 hidden units per LSTM direction, MLP hidden 100, 50 tokens max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub word_dim: usize,
    pub overlap_dim: usize,
    pub window: usize,
    pub filters: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            word_dim: 50,
            overlap_dim: 5,
            window: 5,
            filters: 100,
            lstm_hidden: 50,
            mlp_hidden: 100,
            max_len: 50,
        }
    }
}

impl ModelDims {
    pub fn width(&self) -> usize {
        self.word_dim + self.overlap_dim
    }

    pub fn encoder_dim(&self, kind: EncoderKind) -> usize {
        match kind {
            EncoderKind::Cnn => self.filters,
            EncoderKind::Lstm => 2 * self.lstm_hidden,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let fields = [
            self.word_dim,
            self.overlap_dim,
            self.window,
            self.filters,
            self.lstm_hidden,
            self.mlp_hidden,
            self.max_len,
        ];
        if fields.contains(&0) {
            return Err(NeuralError::Shape(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
