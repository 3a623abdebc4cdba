//! Generated question-pair corpus with a planted syntactic signal.
//!
//! Every pair shares exactly one noun. A pair is positive when that noun is
//! the direct object of the verb in both questions, and negative when it is
//! the subject in at least one of them. Lexical overlap is the same for both
//! classes; the role of the shared noun is visible in the parse trees that
//! ship with every question.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_stopword, Dataset, Question, QuestionPair, Split};

use super::PipelineError;

const LEXICON_SEED: u64 = 0x1e71c0;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const WH: &[&str] = &["how", "why", "when", "where"];
const AUX: &[&str] = &["can", "should", "will", "does", "did", "do"];
const PREP: &[&str] = &["in", "with", "for", "on", "at", "from"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub unlabeled: usize,
    pub seed: u64,
    /// Probability that the shared noun is the object in a question.
    pub object_rate: f64,
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    pub adjective_rate: f64,
    pub adverb_rate: f64,
    /// Probability of a prepositional modifier on a noun phrase.
    pub pp_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train: 500,
            dev: 500,
            test: 500,
            unlabeled: 5000,
            seed: 0,
            object_rate: 0.7,
            nouns: 150,
            verbs: 100,
            adjectives: 60,
            adverbs: 40,
            adjective_rate: 0.5,
            adverb_rate: 0.3,
            pp_rate: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("object_rate", self.object_rate),
            ("adjective_rate", self.adjective_rate),
            ("adverb_rate", self.adverb_rate),
            ("pp_rate", self.pp_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        // a pair draws up to 5 distinct nouns, 2 verbs, 2 adjectives, 2 adverbs
        if self.nouns < 6 || self.verbs < 2 || self.adjectives < 4 || self.adverbs < 2 {
            return Err(PipelineError::Config("synthetic word pools are too small".into()));
        }
        Ok(())
    }
}

/// The generated splits. `unlabeled_truth` keeps the hidden labels of the
/// unlabeled pairs so labeler quality can be measured.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub unlabeled: Dataset,
    pub unlabeled_truth: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Subject,
    Object,
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    adverbs: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &SyntheticConfig) -> Self {
        let mut words = Vec::new();
        for &c1 in CONSONANTS {
            for &v1 in VOWELS {
                for &c2 in CONSONANTS {
                    for &v2 in VOWELS {
                        let w = String::from_utf8(vec![c1, v1, c2, v2]).unwrap();
                        if !is_stopword(&w) {
                            words.push(w);
                        }
                    }
                }
            }
        }
        words.shuffle(&mut ChaCha8Rng::seed_from_u64(LEXICON_SEED));
        let mut it = words.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
        Self {
            nouns: take(cfg.nouns),
            verbs: take(cfg.verbs),
            adjectives: take(cfg.adjectives),
            adverbs: take(cfg.adverbs),
        }
    }
}

/// Draws pool words without repeating any word already used in the pair.
fn fresh<'a, R: Rng>(rng: &mut R, pool: &'a [String], used: &mut HashSet<&'a str>) -> &'a str {
    loop {
        let w = pool[rng.gen_range(0..pool.len())].as_str();
        if used.insert(w) {
            return w;
        }
    }
}

struct Phrase {
    words: Vec<String>,
    tree: String,
}

struct Builder<'a, R> {
    rng: &'a mut R,
    lex: &'a Lexicon,
    cfg: &'a SyntheticConfig,
}

impl<'a, R: Rng> Builder<'a, R> {
    fn noun_phrase(&mut self, head: &str, used: &mut HashSet<&'a str>) -> Phrase {
        let mut words = vec!["the".to_owned()];
        let mut tree = String::from("(NP (DT the)");
        if self.rng.gen_bool(self.cfg.adjective_rate) {
            let adj = fresh(self.rng, &self.lex.adjectives, used);
            words.push(adj.to_owned());
            tree.push_str(&format!(" (JJ {adj})"));
        }
        words.push(head.to_owned());
        tree.push_str(&format!(" (NN {head}))"));
        if self.rng.gen_bool(self.cfg.pp_rate) {
            let prep = PREP[self.rng.gen_range(0..PREP.len())];
            let noun = fresh(self.rng, &self.lex.nouns, used);
            words.extend([prep.to_owned(), "the".to_owned(), noun.to_owned()]);
            tree = format!("(NP {tree} (PP (IN {prep}) (NP (DT the) (NN {noun}))))");
        }
        Phrase { words, tree }
    }

    fn question(&mut self, shared: &str, role: Role, used: &mut HashSet<&'a str>) -> (String, String) {
        let other = fresh(self.rng, &self.lex.nouns, used);
        let (subj, obj) = match role {
            Role::Subject => (shared, other),
            Role::Object => (other, shared),
        };
        let wh = WH[self.rng.gen_range(0..WH.len())];
        let aux = AUX[self.rng.gen_range(0..AUX.len())];
        let verb = fresh(self.rng, &self.lex.verbs, used);
        let s = self.noun_phrase(subj, used);
        let o = self.noun_phrase(obj, used);
        let mut words = vec![wh.to_owned(), aux.to_owned()];
        words.extend(s.words);
        words.push(verb.to_owned());
        words.extend(o.words);
        let mut vp = format!("(VP (VB {verb}) {}", o.tree);
        if self.rng.gen_bool(self.cfg.adverb_rate) {
            let adv = fresh(self.rng, &self.lex.adverbs, used);
            words.push(adv.to_owned());
            vp.push_str(&format!(" (ADVP (RB {adv}))"));
        }
        vp.push(')');
        words.push("?".to_owned());
        let tree = format!(
            "(ROOT (SBARQ (WHADVP (WRB {wh})) (SQ (MD {aux}) {} {vp}) (. ?)))",
            s.tree
        );
        (words.join(" "), tree)
    }

    fn pair(&mut self, id: &str) -> (QuestionPair, bool) {
        let mut used = HashSet::new();
        let shared = fresh(self.rng, &self.lex.nouns, &mut used);
        let mut role = || {
            if self.rng.gen_bool(self.cfg.object_rate) {
                Role::Object
            } else {
                Role::Subject
            }
        };
        let (r1, r2) = (role(), role());
        let (t1, p1) = self.question(shared, r1, &mut used);
        let (t2, p2) = self.question(shared, r2, &mut used);
        let q1 = Question::new(format!("{id}a"), t1).expect("ids are non-empty").with_tree(p1);
        let q2 = Question::new(format!("{id}b"), t2).expect("ids are non-empty").with_tree(p2);
        let label = r1 == Role::Object && r2 == Role::Object;
        (QuestionPair::gold(q1, q2, label), label)
    }
}

/// Generates the four splits deterministically from `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, PipelineError> {
    cfg.validate()?;
    let lex = Lexicon::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = Builder {
        rng: &mut rng,
        lex: &lex,
        cfg,
    };
    let mut split = |name: &str, n: usize| -> (Vec<QuestionPair>, Vec<bool>) {
        (0..n).map(|i| b.pair(&format!("{name}{i}"))).unzip()
    };
    let (train, _) = split("tr", cfg.train);
    let (dev, _) = split("dv", cfg.dev);
    let (test, _) = split("te", cfg.test);
    let (unlabeled, unlabeled_truth) = split("un", cfg.unlabeled);
    let unlabeled = unlabeled
        .into_iter()
        .map(|p| QuestionPair::unlabeled(p.q1, p.q2))
        .collect();
    Ok(SyntheticCorpus {
        train: Dataset::new("synthetic-train", train, Split::Train)?,
        dev: Dataset::new("synthetic-dev", dev, Split::Dev)?,
        test: Dataset::new("synthetic-test", test, Split::Test)?,
        unlabeled: Dataset::new("synthetic-unlabeled", unlabeled, Split::Unlabeled)?,
        unlabeled_truth,
    })
}
