//! The 20 lexical similarity features of a question pair: Jaccard,
//! containment, cosine, LCS and greedy-string-tiling similarities over word
//! n-grams, n = 1..4, after stopword removal.

use std::collections::HashSet;
use std::hash::Hash;
use std::io::Write;

use crate::corpus::{remove_stopwords, Dataset, QuestionPair};

pub const FEATURE_COUNT: usize = 20;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "jaccard_1",
    "jaccard_2",
    "jaccard_3",
    "jaccard_4",
    "containment_1",
    "containment_2",
    "containment_3",
    "containment_4",
    "cosine_1",
    "cosine_2",
    "cosine_3",
    "cosine_4",
    "lcs_1",
    "lcs_2",
    "lcs_3",
    "lcs_4",
    "gst_1",
    "gst_2",
    "gst_3",
    "gst_4",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn names() -> &'static [&'static str; FEATURE_COUNT] {
        &FEATURE_NAMES
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.to_vec()
    }
}

/// Contiguous n-grams in order; empty when `tokens` is shorter than `n`.
pub fn ngrams<T: Clone>(tokens: &[T], n: usize) -> Vec<Vec<T>> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(<[T]>::to_vec).collect()
}

pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `|A ∩ B| / |A|`; asymmetric by design.
pub fn containment<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.intersection(b).count() as f64 / a.len() as f64
}

/// Cosine of the binary incidence vectors.
pub fn cosine_sets<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    a.intersection(b).count() as f64 / ((a.len() * b.len()) as f64).sqrt()
}

pub fn lcs_len<T: PartialEq>(s1: &[T], s2: &[T]) -> usize {
    let mut prev = vec![0usize; s2.len() + 1];
    let mut cur = vec![0usize; s2.len() + 1];
    for x in s1 {
        for (j, y) in s2.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[s2.len()]
}

/// LCS length over the longer sequence's length.
pub fn lcs_sim<T: PartialEq>(s1: &[T], s2: &[T]) -> f64 {
    let longest = s1.len().max(s2.len());
    if longest == 0 {
        return 0.0;
    }
    lcs_len(s1, s2) as f64 / longest as f64
}

/// Total length covered by Wise's greedy string tiling.
///
/// Each round collects every maximal unmarked match of the current maximum
/// length (scanning `s1` then `s2` positions left to right) and tiles those
/// not occluded by earlier tiles of the same round. Rounds repeat while the
/// maximum exceeds `mml`.
pub fn gst_tiled_length<T: PartialEq>(s1: &[T], s2: &[T], mml: usize) -> usize {
    let mml = mml.max(1);
    let mut marked1 = vec![false; s1.len()];
    let mut marked2 = vec![false; s2.len()];
    let mut tiled = 0;
    loop {
        let mut max_match = mml;
        let mut matches: Vec<(usize, usize, usize)> = Vec::new();
        for p in 0..s1.len() {
            if marked1[p] {
                continue;
            }
            for t in 0..s2.len() {
                if marked2[t] {
                    continue;
                }
                let mut j = 0;
                while p + j < s1.len()
                    && t + j < s2.len()
                    && !marked1[p + j]
                    && !marked2[t + j]
                    && s1[p + j] == s2[t + j]
                {
                    j += 1;
                }
                if j == max_match {
                    matches.push((p, t, j));
                } else if j > max_match {
                    matches.clear();
                    matches.push((p, t, j));
                    max_match = j;
                }
            }
        }
        for &(p, t, len) in &matches {
            let free = (0..len).all(|k| !marked1[p + k] && !marked2[t + k]);
            if free {
                for k in 0..len {
                    marked1[p + k] = true;
                    marked2[t + k] = true;
                }
                tiled += len;
            }
        }
        if max_match <= mml {
            break;
        }
    }
    tiled
}

/// `2 · tiled / (|s1| + |s2|)`.
pub fn gst_sim<T: PartialEq>(s1: &[T], s2: &[T], mml: usize) -> f64 {
    let total = s1.len() + s2.len();
    if total == 0 {
        return 0.0;
    }
    2.0 * gst_tiled_length(s1, s2, mml) as f64 / total as f64
}

pub fn feature_vector(p: &QuestionPair) -> FeatureVector {
    feature_vector_tokens(&p.q1.tokens, &p.q2.tokens)
}

pub fn feature_vector_tokens<S: AsRef<str>>(t1: &[S], t2: &[S]) -> FeatureVector {
    let a = remove_stopwords(t1);
    let b = remove_stopwords(t2);
    let mut values = [0.0; FEATURE_COUNT];
    for n in 1..=4 {
        let ga = ngrams(&a, n);
        let gb = ngrams(&b, n);
        let sa: HashSet<&Vec<String>> = ga.iter().collect();
        let sb: HashSet<&Vec<String>> = gb.iter().collect();
        let k = n - 1;
        values[k] = jaccard(&sa, &sb);
        values[4 + k] = containment(&sa, &sb);
        values[8 + k] = cosine_sets(&sa, &sb);
        values[12 + k] = lcs_sim(&ga, &gb);
        values[16 + k] = gst_sim(&ga, &gb, 1);
    }
    FeatureVector { values }
}

/// Feature rows for every pair of a dataset, in order.
pub fn dataset_features(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.pairs.iter().map(|p| feature_vector(p).to_vec()).collect()
}

/// CSV dump: `id1,id2,<20 feature names>`.
pub fn write_features_csv<W: Write>(ds: &Dataset, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id1", "id2"];
    header.extend(FEATURE_NAMES);
    out.write_record(&header)?;
    for p in &ds.pairs {
        let f = feature_vector(p);
        let mut row = vec![p.q1.id.clone(), p.q2.id.clone()];
        row.extend(f.values.iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Question, Split};
    use proptest::prelude::*;

    fn set(xs: &[&'static str]) -> HashSet<&'static str> {
        xs.iter().copied().collect()
    }

    fn pair(a: &str, b: &str) -> QuestionPair {
        QuestionPair::unlabeled(Question::new("1", a).unwrap(), Question::new("2", b).unwrap())
    }

    #[test]
    fn ngram_windows() {
        assert_eq!(ngrams(&["a", "b", "c"], 2), vec![vec!["a", "b"], vec!["b", "c"]]);
        assert!(ngrams(&["a"], 2).is_empty());
        assert_eq!(ngrams(&["a", "b"], 1), vec![vec!["a"], vec!["b"]]);
    }

    #[test]
    fn set_measures() {
        let a = set(&["start", "bakery", "how"]);
        let b = set(&["start", "bakery", "business"]);
        assert_eq!(jaccard(&a, &b), 0.5);
        assert!((containment(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cosine_sets(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(containment(&set(&["start"]), &a), 1.0);
        assert_eq!(containment(&set(&[]), &a), 0.0);
        assert_eq!(cosine_sets(&a, &set(&["x"])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_sim(&["a", "b", "c", "d"], &["a", "c", "d"]), 0.75);
        assert_eq!(lcs_sim(&["a", "b"], &["a", "b"]), 1.0);
        assert_eq!(lcs_sim(&["a", "b"], &["c"]), 0.0);
        assert_eq!(lcs_sim::<&str>(&[], &[]), 0.0);
    }

    #[test]
    fn gst_examples() {
        assert_eq!(gst_tiled_length(&["a", "b", "c"], &["c", "a", "b"], 1), 3);
        assert_eq!(gst_sim(&["a", "b", "c"], &["c", "a", "b"], 1), 1.0);
        assert_eq!(gst_sim(&["a", "b"], &["a", "b"], 1), 1.0);
        assert_eq!(gst_sim(&["a", "b"], &["c", "d"], 1), 0.0);
        // the longest tile wins over two shorter overlapping ones
        assert_eq!(gst_tiled_length(&["x", "a", "b", "c"], &["a", "b", "c", "x"], 1), 4);
        assert_eq!(gst_tiled_length(&["a", "b", "c"], &["c", "a", "b"], 3), 0);
    }

    #[test]
    fn twenty_named_features() {
        let f = feature_vector(&pair("How do you start a bakery?", "How can one start a bakery business?"));
        assert_eq!(f.values.len(), 20);
        assert_eq!(FeatureVector::names()[0], "jaccard_1");
        assert_eq!(f.get("jaccard_1"), Some(jaccard(
            &set(&["start", "bakery"]),
            &set(&["one", "start", "bakery", "business"]),
        )));
    }

    #[test]
    fn identical_and_disjoint() {
        let f = feature_vector(&pair("renew visa online quickly today", "renew visa online quickly today"));
        assert!(f.values.iter().all(|&v| v == 1.0), "{f:?}");
        let f = feature_vector(&pair("renew visa online", "bakery business loans"));
        assert!(f.values.iter().all(|&v| v == 0.0));
        let f = feature_vector(&pair("visa", "visa"));
        assert_eq!(f.get("jaccard_1"), Some(1.0));
        assert_eq!(f.get("jaccard_2"), Some(0.0));
        assert_eq!(f.get("lcs_4"), Some(0.0));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let ds = Dataset::new("d", vec![pair("a visa", "visa")], Split::Train).unwrap();
        let mut buf = Vec::new();
        write_features_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("id1,id2,jaccard_1,"));
        assert_eq!(lines[0].split(',').count(), 22);
    }

    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<u8> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            let mut it = b.iter();
            if sub.iter().all(|x| it.any(|y| y == x)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn lcs_matches_enumeration(a in prop::collection::vec(0u8..4, 0..=8), b in prop::collection::vec(0u8..4, 0..=8)) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn features_bounded_and_symmetric(
            a in prop::collection::vec("[a-e]x", 0..10),
            b in prop::collection::vec("[a-e]x", 0..10),
        ) {
            let f = feature_vector_tokens(&a, &b);
            let g = feature_vector_tokens(&b, &a);
            for (i, (x, y)) in f.values.iter().zip(&g.values).enumerate() {
                prop_assert!((0.0..=1.0).contains(x));
                if !FEATURE_NAMES[i].starts_with("containment") {
                    prop_assert!((x - y).abs() < 1e-12, "{} {} {}", FEATURE_NAMES[i], x, y);
                }
            }
        }
    }
}
