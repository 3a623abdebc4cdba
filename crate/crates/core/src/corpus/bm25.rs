use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use super::{is_stopword, Dataset, Question, QuestionPair, Result, Split};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// In-memory inverted index over questions, scored with Okapi BM25.
///
/// Documents are the non-stopword tokens of each question.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<Question>,
    lengths: Vec<usize>,
    postings: HashMap<String, Vec<(usize, usize)>>,
    avg_len: f64,
}

fn index_terms(q: &Question) -> impl Iterator<Item = &str> {
    q.tokens.iter().map(String::as_str).filter(|t| !is_stopword(t))
}

impl Bm25Index {
    pub fn new(questions: impl IntoIterator<Item = Question>) -> Self {
        let docs: Vec<Question> = questions.into_iter().collect();
        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut lengths = Vec::with_capacity(docs.len());
        for (d, q) in docs.iter().enumerate() {
            let mut tf: HashMap<&str, usize> = HashMap::new();
            let mut len = 0;
            for t in index_terms(q) {
                *tf.entry(t).or_default() += 1;
                len += 1;
            }
            lengths.push(len);
            for (t, c) in tf {
                postings.entry(t.to_owned()).or_default().push((d, c));
            }
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Self {
            docs,
            lengths,
            postings,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, floored at zero.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let total = self.docs.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln().max(0.0)
    }

    fn scores(&self, query: &Question) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        let terms: BTreeSet<&str> = index_terms(query).collect();
        for t in terms {
            let Some(post) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(d, tf) in post {
                let tf = tf as f64;
                let norm = if self.avg_len > 0.0 {
                    1.0 - BM25_B + BM25_B * self.lengths[d] as f64 / self.avg_len
                } else {
                    1.0
                };
                scores[d] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        scores
    }

    /// Top-`k` documents by descending score, ties by ascending question id.
    /// A document with the query's own id is never returned.
    pub fn retrieve(&self, query: &Question, k: usize) -> Vec<(&Question, f64)> {
        let scores = self.scores(query);
        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(d, _)| self.docs[d].id != query.id)
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.docs[a.0].id.cmp(&self.docs[b.0].id))
        });
        ranked.truncate(k);
        ranked.into_iter().map(|(d, s)| (&self.docs[d], s)).collect()
    }
}

pub fn retrieve_candidates(query: &Question, index: &[Question], k: usize) -> Vec<(Question, f64)> {
    Bm25Index::new(index.iter().cloned())
        .retrieve(query, k)
        .into_iter()
        .map(|(q, s)| (q.clone(), s))
        .collect()
}

/// Pairs every query with its top-`k` BM25 candidates from `pool`.
pub fn generate_unlabeled_pairs(
    name: &str,
    queries: &[Question],
    pool: &Bm25Index,
    k: usize,
) -> Result<Dataset> {
    let pairs = queries
        .iter()
        .flat_map(|q| {
            pool.retrieve(q, k)
                .into_iter()
                .map(|(c, _)| QuestionPair::unlabeled(q.clone(), c.clone()))
        })
        .collect();
    Dataset::new(name, pairs, Split::Unlabeled)
}
