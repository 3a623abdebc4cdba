use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Grade, Question, QuestionPair, Result, Source, Split};

/// Rows skipped while ingesting a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub warnings: usize,
    pub messages: Vec<String>,
}

impl LoadReport {
    fn warn(&mut self, message: String) {
        self.warnings += 1;
        self.messages.push(message);
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads the six-column Quora duplicate-question TSV
/// (`id qid1 qid2 question1 question2 is_duplicate`, header optional).
///
/// Malformed rows are skipped and reported; the dataset is returned as the
/// `train` split.
pub fn load_quora_tsv(path: &Path) -> Result<(Dataset, LoadReport)> {
    let reader = BufReader::new(open(path)?);
    let mut report = LoadReport::default();
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if idx == 0 && cols.last().map(|c| c.trim()) == Some("is_duplicate") {
            continue;
        }
        let lineno = idx + 1;
        if cols.len() != 6 {
            report.warn(format!("line {lineno}: expected 6 columns, got {}", cols.len()));
            continue;
        }
        let label = match cols[5].trim() {
            "0" => false,
            "1" => true,
            other => {
                report.warn(format!("line {lineno}: invalid is_duplicate `{other}`"));
                continue;
            }
        };
        let (Ok(q1), Ok(q2)) = (
            Question::new(cols[1].trim(), cols[3]),
            Question::new(cols[2].trim(), cols[4]),
        ) else {
            report.warn(format!("line {lineno}: empty question id"));
            continue;
        };
        pairs.push(QuestionPair::gold(q1, q2, label));
    }
    let ds = Dataset::new(stem(path), pairs, Split::Train)?;
    Ok((ds, report))
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    id1: String,
    id2: String,
    text1: String,
    text2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grade: Option<Grade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default)]
    source: Source,
}

impl PairRecord {
    fn from_pair(p: &QuestionPair) -> Self {
        Self {
            id1: p.q1.id.clone(),
            id2: p.q2.id.clone(),
            text1: p.q1.raw_text.clone(),
            text2: p.q2.raw_text.clone(),
            tree1: p.q1.tree_source.clone(),
            tree2: p.q2.tree_source.clone(),
            label: p.label.map(u8::from),
            grade: p.grade,
            score: p.score,
            source: p.source,
        }
    }

    fn into_pair(self) -> std::result::Result<QuestionPair, String> {
        let label = match self.label {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(other) => return Err(format!("label must be 0 or 1, got {other}")),
        };
        let mut q1 = Question::new(self.id1, self.text1).map_err(|e| e.to_string())?;
        let mut q2 = Question::new(self.id2, self.text2).map_err(|e| e.to_string())?;
        q1.tree_source = self.tree1;
        q2.tree_source = self.tree2;
        let pair = QuestionPair {
            q1,
            q2,
            label: label.or(self.grade.map(Grade::is_relevant)),
            grade: self.grade,
            source: self.source,
            score: self.score,
        };
        pair.validate().map_err(|e| e.to_string())?;
        Ok(pair)
    }
}

/// Parses JSONL pair records from any reader.
pub fn read_jsonl<R: BufRead>(reader: R, name: &str, split: Split) -> Result<Dataset> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Jsonl {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let pair = record.into_pair().map_err(|message| CorpusError::Jsonl {
            line: idx + 1,
            message,
        })?;
        pairs.push(pair);
    }
    Dataset::new(name, pairs, split)
}

pub fn load_jsonl(path: &Path, split: Split) -> Result<Dataset> {
    read_jsonl(BufReader::new(open(path)?), &stem(path), split)
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut writer: W) -> Result<()> {
    for p in &dataset.pairs {
        let line = serde_json::to_string(&PairRecord::from_pair(p))
            .expect("pair records always serialize");
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    write_jsonl(dataset, BufWriter::new(File::create(path)?))
}
