//! Bracketed constituency trees and REL-tagged question macro-trees.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::corpus::{is_stopword, Question};

pub const QUESTION_LABEL: &str = "QUESTION";
pub const FLAT_SENTENCE_LABEL: &str = "S";
pub const FLAT_TOKEN_LABEL: &str = "TOK";
pub const REL_PREFIX: &str = "REL-";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntaxError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("question {0} has no tokens")]
    EmptyQuestion(String),
    #[error("question {0} has no parse tree and the flat fallback is disabled")]
    MissingTree(String),
    #[error("question {0}: tree source contains no trees")]
    NoSentences(String),
}

/// A constituency tree node. Leaves carry their (lowercased) token both as
/// `leaf_token` and as `label`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParseTree {
    pub label: String,
    pub children: Vec<ParseTree>,
    pub leaf_token: Option<String>,
}

impl ParseTree {
    pub fn leaf(token: impl Into<String>) -> Self {
        let token = token.into();
        Self {
            label: token.clone(),
            children: Vec::new(),
            leaf_token: Some(token),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        Self {
            label: label.into(),
            children,
            leaf_token: None,
        }
    }

    /// `(label token)`
    pub fn preterminal(label: impl Into<String>, token: impl Into<String>) -> Self {
        Self::node(label, vec![Self::leaf(token)])
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf_token.is_some()
    }

    pub fn is_preterminal(&self) -> bool {
        !self.children.is_empty() && self.children.iter().all(ParseTree::is_leaf)
    }

    /// Left-to-right leaf tokens.
    pub fn yield_tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_yield(&mut out);
        out
    }

    fn collect_yield<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.leaf_token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_yield(out)),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(ParseTree::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(ParseTree::depth).max().unwrap_or(0)
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a ParseTree)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

fn escape_leaf(token: &str) -> &str {
    match token {
        "(" => "-LRB-",
        ")" => "-RRB-",
        t => t,
    }
}

fn unescape_leaf(token: &str) -> String {
    match token {
        "-LRB-" | "-lrb-" => "(".to_owned(),
        "-RRB-" | "-rrb-" => ")".to_owned(),
        t => t.to_lowercase(),
    }
}

/// Canonical single-line bracket form.
impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = &self.leaf_token {
            return f.write_str(escape_leaf(t));
        }
        write!(f, "({}", self.label)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::Parse {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    /// Parses one `( label child+ )` expression; `self.pos` is at `(`.
    fn expr(&mut self) -> Result<ParseTree, SyntaxError> {
        let open = self.pos;
        self.pos += 1;
        let label_at = self.pos;
        let label = self.atom();
        if label.is_empty() {
            return self.err(label_at, "expected a node label");
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.get(self.pos) {
                None => return self.err(self.pos, format!("unclosed `(` opened at offset {open}")),
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some('(') => children.push(self.expr()?),
                Some(_) => children.push(ParseTree::leaf(unescape_leaf(&self.atom()))),
            }
        }
        if children.is_empty() {
            return self.err(open, format!("node `{label}` has no children"));
        }
        Ok(ParseTree::node(label, children))
    }

    fn all(&mut self) -> Result<Vec<ParseTree>, SyntaxError> {
        let mut trees = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.get(self.pos) {
                None => return Ok(trees),
                Some('(') => trees.push(self.expr()?),
                Some(')') => return self.err(self.pos, "unbalanced `)`"),
                Some(_) => return self.err(self.pos, "token outside of brackets"),
            }
        }
    }
}

/// Parses zero or more Penn-Treebank-style bracketed trees. Offsets in
/// errors are character offsets into `text`.
pub fn parse_bracketed(text: &str) -> Result<Vec<ParseTree>, SyntaxError> {
    Parser::new(text).all()
}

/// One question's sentence trees under a `QUESTION` root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroTree {
    pub root: ParseTree,
    pub rel_tagged: bool,
}

impl MacroTree {
    pub fn from_sentences(sentences: Vec<ParseTree>) -> Self {
        Self {
            root: ParseTree::node(QUESTION_LABEL, sentences),
            rel_tagged: false,
        }
    }

    pub fn yield_tokens(&self) -> Vec<&str> {
        self.root.yield_tokens()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOptions {
    /// Use a flat `S → TOK*` tree when a question carries no parse.
    pub flat_fallback: bool,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { flat_fallback: true }
    }
}

/// `QUESTION → S → TOK*`, one preterminal per token.
pub fn flat_fallback_tree(question: &Question) -> Result<MacroTree, SyntaxError> {
    if question.tokens.is_empty() {
        return Err(SyntaxError::EmptyQuestion(question.id.clone()));
    }
    let toks = question
        .tokens
        .iter()
        .map(|t| ParseTree::preterminal(FLAT_TOKEN_LABEL, t.clone()))
        .collect();
    Ok(MacroTree::from_sentences(vec![ParseTree::node(
        FLAT_SENTENCE_LABEL,
        toks,
    )]))
}

/// The unmarked macro-tree of `question`.
pub fn macro_tree(question: &Question, opts: TreeOptions) -> Result<MacroTree, SyntaxError> {
    match &question.tree_source {
        Some(src) => {
            let sentences = parse_bracketed(src)?;
            if sentences.is_empty() {
                return Err(SyntaxError::NoSentences(question.id.clone()));
            }
            Ok(MacroTree::from_sentences(sentences))
        }
        None if opts.flat_fallback => flat_fallback_tree(question),
        None => Err(SyntaxError::MissingTree(question.id.clone())),
    }
}

/// Prefixes `REL-` to every non-leaf node whose yield holds a non-stopword
/// token from `other_tokens`. Returns whether `tree` matched.
fn mark_rel(tree: &mut ParseTree, other_tokens: &HashSet<&str>) -> bool {
    if let Some(t) = &tree.leaf_token {
        return !is_stopword(t) && other_tokens.contains(t.as_str());
    }
    let mut matched = false;
    for c in &mut tree.children {
        matched |= mark_rel(c, other_tokens);
    }
    if matched {
        tree.label = format!("{REL_PREFIX}{}", tree.label);
    }
    matched
}

/// `t(x, y)`: the macro-tree of `x` with REL marks wherever its phrases
/// lexically match `y`.
pub fn build_macro_tree(
    x: &Question,
    y: &Question,
    opts: TreeOptions,
) -> Result<MacroTree, SyntaxError> {
    let mut tree = macro_tree(x, opts)?;
    let lowered: Vec<String> = y.tokens.iter().map(|t| t.to_lowercase()).collect();
    let other: HashSet<&str> = lowered.iter().map(String::as_str).collect();
    mark_rel(&mut tree.root, &other);
    tree.rel_tagged = true;
    Ok(tree)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_tree() {
        let t = parse_bracketed("(X y)").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0].is_preterminal());
        assert_eq!(t[0].label, "X");
        assert_eq!(t[0].yield_tokens(), ["y"]);
    }

    #[test]
    fn nested_tree() {
        let t = parse_bracketed("(S (NP (DT a)) (VP (VB run)))").unwrap();
        let s = &t[0];
        assert_eq!(s.label, "S");
        let labels: Vec<_> = s.children.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["NP", "VP"]);
        assert_eq!(s.yield_tokens(), ["a", "run"]);
    }

    #[test]
    fn leaves_lowercased_labels_verbatim() {
        let t = parse_bracketed("(NP-SBJ (NNP Quora))").unwrap();
        assert_eq!(t[0].label, "NP-SBJ");
        assert_eq!(t[0].yield_tokens(), ["quora"]);
    }

    #[test]
    fn multiple_top_level() {
        let t = parse_bracketed(" (A x)\n(B y) ").unwrap();
        assert_eq!(t.len(), 2);
        assert!(parse_bracketed("").unwrap().is_empty());
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(
            parse_bracketed("((").unwrap_err(),
            SyntaxError::Parse {
                offset: 1,
                message: "expected a node label".into()
            }
        );
        assert!(matches!(
            parse_bracketed("(S (NP a)"),
            Err(SyntaxError::Parse { offset: 9, .. })
        ));
        assert!(matches!(
            parse_bracketed("(S a))"),
            Err(SyntaxError::Parse { offset: 5, .. })
        ));
        assert!(parse_bracketed("(S)").is_err());
        assert!(parse_bracketed("word").is_err());
    }

    #[test]
    fn bracket_tokens_escape() {
        let t = ParseTree::node("S", vec![ParseTree::preterminal("-LRB-", "(")]);
        assert_eq!(t.to_string(), "(S (-LRB- -LRB-))");
        assert_eq!(parse_bracketed(&t.to_string()).unwrap()[0], t);
    }

    fn q(id: &str, text: &str) -> Question {
        Question::new(id, text).unwrap()
    }

    #[test]
    fn flat_fallback_shape() {
        let m = flat_fallback_tree(&q("1", "a b")).unwrap();
        assert_eq!(m.root.to_string(), "(QUESTION (S (TOK a) (TOK b)))");
        assert!(!m.rel_tagged);
        let one = flat_fallback_tree(&q("2", "bakery")).unwrap();
        assert_eq!(one.root.depth(), 4); // QUESTION, S, TOK and the leaf
        assert!(flat_fallback_tree(&q("3", "")).is_err());
    }

    #[test]
    fn missing_tree_without_fallback() {
        let x = q("1", "a b");
        assert_eq!(
            macro_tree(&x, TreeOptions { flat_fallback: false }),
            Err(SyntaxError::MissingTree("1".into()))
        );
    }

    #[test]
    fn rel_marks_matching_ancestors() {
        let x = q("x", "a bakery").with_tree("(S (NP (DT a) (NN bakery)))");
        let y = q("y", "How can one start a bakery business?");
        let m = build_macro_tree(&x, &y, TreeOptions::default()).unwrap();
        assert!(m.rel_tagged);
        assert_eq!(
            m.root.to_string(),
            "(REL-QUESTION (REL-S (REL-NP (DT a) (REL-NN bakery))))"
        );
    }

    #[test]
    fn no_shared_content_word_no_marks() {
        let x = q("x", "a bakery").with_tree("(S (NP (DT a) (NN bakery)))");
        let y = q("y", "a car");
        let marked = build_macro_tree(&x, &y, TreeOptions::default()).unwrap();
        let plain = macro_tree(&x, TreeOptions::default()).unwrap();
        assert_eq!(marked.root, plain.root);
    }

    #[test]
    fn self_match_marks_content_dominators() {
        let x = q("x", "what is the bakery ?")
            .with_tree("(SBARQ (WHNP (WP what)) (SQ (VBZ is) (NP (DT the) (NN bakery))) (. ?))");
        let m = build_macro_tree(&x, &x, TreeOptions::default()).unwrap();
        assert_eq!(
            m.root.to_string(),
            "(REL-QUESTION (REL-SBARQ (WHNP (WP what)) (REL-SQ (VBZ is) (REL-NP (DT the) (REL-NN bakery))) (. ?)))"
        );
    }

    #[test]
    fn multi_sentence_order() {
        let x = q("x", "a b").with_tree("(S1 (X a)) (S2 (Y b))");
        let m = macro_tree(&x, TreeOptions::default()).unwrap();
        let labels: Vec<_> = m.root.children.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["S1", "S2"]);
    }

    pub(crate) fn arb_tree(depth: u32) -> impl Strategy<Value = ParseTree> {
        let leaf = "[a-z]{1,4}".prop_map(|t| ParseTree::preterminal("NN", t));
        leaf.prop_recursive(depth, 24, 3, |inner| {
            ("[A-Z]{1,3}", proptest::collection::vec(inner, 1..4))
                .prop_map(|(l, cs)| ParseTree::node(l, cs))
        })
    }

    fn count_rel(t: &ParseTree) -> usize {
        let mut n = 0;
        t.walk(&mut |x| {
            if x.label.starts_with(REL_PREFIX) && !x.is_leaf() {
                n += 1
            }
        });
        n
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(t in arb_tree(4)) {
            let s = t.to_string();
            let back = parse_bracketed(&s).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0], &t);
            prop_assert_eq!(back[0].to_string(), s);
        }

        #[test]
        fn flat_yield_is_tokens(words in proptest::collection::vec("[a-z]{1,5}", 1..10)) {
            let x = q("x", &words.join(" "));
            let m = flat_fallback_tree(&x).unwrap();
            prop_assert_eq!(m.yield_tokens(), x.tokens.iter().map(String::as_str).collect::<Vec<_>>());
        }

        #[test]
        fn rel_preserves_shape_and_is_monotone(
            t in arb_tree(4),
            ys in proptest::collection::vec("[a-z]{1,4}", 0..6),
            extra in proptest::collection::vec("[a-z]{1,4}", 0..6),
        ) {
            let x = q("x", &t.yield_tokens().join(" ")).with_tree(t.to_string());
            let small = q("y", &ys.join(" "));
            let big = q("y", &format!("{} {}", ys.join(" "), extra.join(" ")));
            let plain = macro_tree(&x, TreeOptions::default()).unwrap();
            let a = build_macro_tree(&x, &small, TreeOptions::default()).unwrap();
            let b = build_macro_tree(&x, &big, TreeOptions::default()).unwrap();
            prop_assert_eq!(a.yield_tokens(), plain.yield_tokens());
            prop_assert_eq!(a.root.node_count(), plain.root.node_count());
            prop_assert!(count_rel(&b.root) >= count_rel(&a.root));
            // every mark in `a` survives in `b`
            let mut la = Vec::new();
            a.root.walk(&mut |n| la.push(n.label.clone()));
            let mut lb = Vec::new();
            b.root.walk(&mut |n| lb.push(n.label.clone()));
            for (x, y) in la.iter().zip(&lb) {
                if x.starts_with(REL_PREFIX) {
                    prop_assert!(y.starts_with(REL_PREFIX));
                }
            }
        }
    }
}
