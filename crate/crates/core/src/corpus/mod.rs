//! Question pairs, datasets and the plumbing around them: tokenization,
//! Quora TSV / JSONL ingestion, vocabularies and BM25 candidate retrieval.

mod bm25;
mod io;
mod tokenize;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{generate_unlabeled_pairs, retrieve_candidates, Bm25Index, BM25_B, BM25_K1};
pub use io::{load_jsonl, load_quora_tsv, read_jsonl, save_jsonl, write_jsonl, LoadReport};
pub use tokenize::{is_stopword, remove_stopwords, stopwords, tokenize};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("question id must be non-empty")]
    EmptyId,
    #[error("grade {grade} contradicts label {label}")]
    GradeLabelMismatch { grade: Grade, label: bool },
    #[error("automatic pair {0}/{1} has no labeler score")]
    MissingScore(String, String),
    #[error("dataset split `unlabeled` contains a labeled pair ({0}/{1})")]
    LabeledInUnlabeledSplit(String, String),
    #[error("vocabulary must be built from training data, got split `{0}`")]
    LeakySplit(Split),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    /// Bracketed parse, one expression per sentence.
    pub tree_source: Option<String>,
    pub subject: Option<String>,
    pub body: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        let raw_text = text.into();
        let tokens = tokenize(&raw_text);
        Ok(Self {
            id,
            raw_text,
            tokens,
            tree_source: None,
            subject: None,
            body: None,
        })
    }

    /// Forum-style question: the text seen by models is `subject + " " + body`.
    pub fn from_subject_body(
        id: impl Into<String>,
        subject: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self> {
        let subject = subject.into();
        let body = body.into();
        let mut q = Self::new(id, format!("{subject} {body}"))?;
        q.subject = Some(subject);
        q.body = Some(body);
        Ok(q)
    }

    pub fn with_tree(mut self, tree: impl Into<String>) -> Self {
        self.tree_source = Some(tree.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grade {
    PerfectMatch,
    Relevant,
    Irrelevant,
}

impl Grade {
    pub fn is_relevant(self) -> bool {
        matches!(self, Grade::PerfectMatch | Grade::Relevant)
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Grade::PerfectMatch => "PerfectMatch",
            Grade::Relevant => "Relevant",
            Grade::Irrelevant => "Irrelevant",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Gold,
    Automatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPair {
    pub q1: Question,
    pub q2: Question,
    pub label: Option<bool>,
    pub grade: Option<Grade>,
    pub source: Source,
    /// Decision value of the labeler that produced an automatic label.
    pub score: Option<f64>,
}

impl QuestionPair {
    pub fn unlabeled(q1: Question, q2: Question) -> Self {
        Self {
            q1,
            q2,
            label: None,
            grade: None,
            source: Source::Gold,
            score: None,
        }
    }

    pub fn gold(q1: Question, q2: Question, label: bool) -> Self {
        Self {
            label: Some(label),
            ..Self::unlabeled(q1, q2)
        }
    }

    pub fn graded(q1: Question, q2: Question, grade: Grade) -> Self {
        Self {
            label: Some(grade.is_relevant()),
            grade: Some(grade),
            ..Self::unlabeled(q1, q2)
        }
    }

    pub fn automatic(q1: Question, q2: Question, label: bool, score: f64) -> Self {
        Self {
            label: Some(label),
            source: Source::Automatic,
            score: Some(score),
            ..Self::unlabeled(q1, q2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q1.id.is_empty() || self.q2.id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if let (Some(grade), Some(label)) = (self.grade, self.label) {
            if grade.is_relevant() != label {
                return Err(CorpusError::GradeLabelMismatch { grade, label });
            }
        }
        if self.source == Source::Automatic && self.score.is_none() {
            return Err(CorpusError::MissingScore(
                self.q1.id.clone(),
                self.q2.id.clone(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unlabeled,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        };
        f.write_str(s)
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "unlabeled" => Ok(Split::Unlabeled),
            _ => Err(CorpusError::UnknownVariant {
                kind: "split",
                value: s.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub pairs: Vec<QuestionPair>,
    pub split: Split,
}

impl Dataset {
    pub fn new(name: impl Into<String>, pairs: Vec<QuestionPair>, split: Split) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            pairs,
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            p.validate()?;
            if self.split == Split::Unlabeled && p.label.is_some() {
                return Err(CorpusError::LabeledInUnlabeledSplit(
                    p.q1.id.clone(),
                    p.q2.id.clone(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The first `n` pairs (or all of them) as a new dataset.
    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            pairs: self.pairs[..n.min(self.pairs.len())].to_vec(),
            split: self.split,
        }
    }

    /// Copy with every label, grade and score stripped.
    pub fn unlabeled_copy(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| QuestionPair::unlabeled(p.q1.clone(), p.q2.clone()))
                .collect(),
            split: Split::Unlabeled,
        }
    }

    pub fn labels(&self) -> Option<Vec<bool>> {
        self.pairs.iter().map(|p| p.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, text: &str) -> Question {
        Question::new(id, text).unwrap()
    }

    #[test]
    fn question_tokens_follow_text() {
        let x = q("1", "How do you start a bakery?");
        assert_eq!(x.tokens, tokenize(&x.raw_text));
        assert!(matches!(Question::new("", "x"), Err(CorpusError::EmptyId)));
    }

    #[test]
    fn subject_body_concatenation() {
        let x = Question::from_subject_body("7", "Visa renewal", "How long does it take?").unwrap();
        assert_eq!(x.raw_text, "Visa renewal How long does it take?");
        assert_eq!(x.subject.as_deref(), Some("Visa renewal"));
    }

    #[test]
    fn grade_determines_label() {
        let p = QuestionPair::graded(q("a", "x"), q("b", "y"), Grade::Relevant);
        assert_eq!(p.label, Some(true));
        let p = QuestionPair::graded(q("a", "x"), q("b", "y"), Grade::Irrelevant);
        assert_eq!(p.label, Some(false));
        let mut bad = QuestionPair::graded(q("a", "x"), q("b", "y"), Grade::PerfectMatch);
        bad.label = Some(false);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn automatic_requires_score() {
        let mut p = QuestionPair::automatic(q("a", "x"), q("b", "y"), true, 0.3);
        assert!(p.validate().is_ok());
        p.score = None;
        assert!(matches!(p.validate(), Err(CorpusError::MissingScore(..))));
    }

    #[test]
    fn unlabeled_split_rejects_labels() {
        let p = QuestionPair::gold(q("a", "x"), q("b", "y"), true);
        assert!(Dataset::new("d", vec![p.clone()], Split::Unlabeled).is_err());
        assert!(Dataset::new("d", vec![p], Split::Train).is_ok());
    }
}
