//! Accuracy and mean average precision, plus the predictions CSV both are
//! computed from.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("ranked list for query `{0}` is empty")]
    EmptyList(String),
    #[error("no query has a relevant candidate")]
    NoRelevant,
    #[error("predictions file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

pub fn accuracy(predictions: &[bool], gold: &[bool]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Accuracy of `score ≥ threshold` decisions.
pub fn accuracy_at(scores: &[f64], gold: &[bool], threshold: f64) -> Result<f64> {
    let preds: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    accuracy(&preds, gold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
    pub relevant: bool,
}

/// Candidates of one query, sorted by descending score with ties broken by
/// ascending candidate id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, mut candidates: Vec<Candidate>) -> Self {
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        Self {
            query_id: query_id.into(),
            candidates,
        }
    }

    /// Mean of precision@k over relevant ranks; `None` with no relevant candidate.
    pub fn average_precision(&self) -> Option<f64> {
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (k, c) in self.candidates.iter().enumerate() {
            if c.relevant {
                hits += 1;
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        (hits > 0).then(|| sum / hits as f64)
    }
}

/// MAP over queries that have at least one relevant candidate.
pub fn mean_average_precision(lists: &[RankedList]) -> Result<f64> {
    if let Some(l) = lists.iter().find(|l| l.candidates.is_empty()) {
        return Err(EvalError::EmptyList(l.query_id.clone()));
    }
    let aps: Vec<f64> = lists.iter().filter_map(RankedList::average_precision).collect();
    if aps.is_empty() {
        return Err(EvalError::NoRelevant);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// One line of the predictions CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub query_id: String,
    pub candidate_id: String,
    pub score: f64,
    #[serde(with = "bit")]
    pub gold: bool,
}

mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("gold must be 0 or 1, got {v}"))),
        }
    }
}

pub fn read_predictions<R: Read>(r: R) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::Reader::from_reader(r);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<PredictionRow>, _>>()
        .map_err(Into::into)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_predictions(File::open(path)?)
}

pub fn write_predictions<W: Write>(w: W, rows: &[PredictionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    write_predictions(File::create(path)?, rows)
}

/// Groups rows by query id, in order of first appearance.
pub fn ranked_lists(rows: &[PredictionRow]) -> Vec<RankedList> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<Candidate>> = HashMap::new();
    for r in rows {
        let entry = groups.entry(&r.query_id).or_insert_with(|| {
            order.push(&r.query_id);
            Vec::new()
        });
        entry.push(Candidate {
            id: r.candidate_id.clone(),
            score: r.score,
            relevant: r.gold,
        });
    }
    order
        .into_iter()
        .map(|q| RankedList::new(q, groups.remove(q).unwrap_or_default()))
        .collect()
}
