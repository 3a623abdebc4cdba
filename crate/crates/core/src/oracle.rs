//! Brute-force reference implementations used to cross-check the fast
//! dynamic programs, plus a seeded random-tree generator.
//!
//! Everything here is exponential in tree size; keep inputs tiny.

use std::collections::HashMap;

use rand::Rng;

use crate::syntax::ParseTree;

/// Explicit subset-tree kernel: enumerate every fragment rooted at every
/// node of both trees, then `K = Σ_f c1(f)·c2(f)·λ^{productions(f)}`.
pub fn sst_bruteforce(t1: &ParseTree, t2: &ParseTree, lambda: f64) -> f64 {
    let f1 = sst_fragment_counts(t1);
    let f2 = sst_fragment_counts(t2);
    f1.iter()
        .filter_map(|(frag, &(c1, size))| {
            f2.get(frag).map(|&(c2, _)| c1 as f64 * c2 as f64 * lambda.powi(size as i32))
        })
        .sum()
}

/// Fragment string → (occurrences, number of productions).
fn sst_fragment_counts(t: &ParseTree) -> HashMap<String, (usize, usize)> {
    let mut counts = HashMap::new();
    t.walk(&mut |n| {
        if !n.is_leaf() {
            for (frag, size) in sst_fragments_at(n) {
                counts.entry(frag).or_insert((0, size)).0 += 1;
            }
        }
    });
    counts
}

/// All fragments rooted at `n`: `n`'s full production, each non-leaf child
/// either cut or expanded recursively.
fn sst_fragments_at(n: &ParseTree) -> Vec<(String, usize)> {
    let mut partial: Vec<(Vec<String>, usize)> = vec![(Vec::new(), 1)];
    for c in &n.children {
        let options: Vec<(String, usize)> = if c.is_leaf() {
            vec![(format!("'{}", c.label), 0)]
        } else {
            let mut o = vec![(c.label.clone(), 0)];
            o.extend(sst_fragments_at(c));
            o
        };
        let mut next = Vec::with_capacity(partial.len() * options.len());
        for (parts, size) in &partial {
            for (s, k) in &options {
                let mut p = parts.clone();
                p.push(s.clone());
                next.push((p, size + k));
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(|(parts, size)| (format!("({} {})", n.label, parts.join(" ")), size))
        .collect()
}

/// Explicit partial-tree kernel: every node contributes weighted partial
/// fragments; two fragments match when their strings are equal and
/// `K = Σ_s W1(s)·W2(s)`.
///
/// A fragment rooted at `n` keeps an ordered, non-empty subset `J` of the
/// children (each itself a partial fragment) or none of them. Its weight is
/// `√μ·λ` with no children and `√μ·λ^{J_last − J_first + 1}·Π w(child)`
/// otherwise, so the product of two matching weights reproduces the
/// `μ`/`λ` factors of the recursive definition.
pub fn ptk_bruteforce(t1: &ParseTree, t2: &ParseTree, lambda: f64, mu: f64) -> f64 {
    let w1 = ptk_weights(t1, lambda, mu);
    let w2 = ptk_weights(t2, lambda, mu);
    w1.iter()
        .filter_map(|(s, a)| w2.get(s).map(|b| a * b))
        .sum()
}

fn ptk_weights(t: &ParseTree, lambda: f64, mu: f64) -> HashMap<String, f64> {
    let mut w = HashMap::new();
    t.walk(&mut |n| {
        for (s, v) in ptk_fragments_at(n, lambda, mu) {
            *w.entry(s).or_insert(0.0) += v;
        }
    });
    w
}

fn ptk_fragments_at(n: &ParseTree, lambda: f64, mu: f64) -> Vec<(String, f64)> {
    let root = mu.sqrt();
    let mut out = vec![(format!("({})", n.label), root * lambda)];
    let k = n.children.len();
    if k == 0 {
        return out;
    }
    let child_frags: Vec<Vec<(String, f64)>> = n
        .children
        .iter()
        .map(|c| ptk_fragments_at(c, lambda, mu))
        .collect();
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let span = (idx[idx.len() - 1] - idx[0] + 1) as i32;
        let mut partial: Vec<(Vec<&str>, f64)> = vec![(Vec::new(), root * lambda.powi(span))];
        for &i in &idx {
            let mut next = Vec::new();
            for (parts, w) in &partial {
                for (s, v) in &child_frags[i] {
                    let mut p = parts.clone();
                    p.push(s);
                    next.push((p, w * v));
                }
            }
            partial = next;
        }
        out.extend(
            partial
                .into_iter()
                .map(|(parts, w)| (format!("({} {})", n.label, parts.join(" ")), w)),
        );
    }
    out
}

/// Random ordered tree with exactly `nodes` nodes (at least 2). Node `i > 0`
/// attaches to a uniformly chosen earlier node; childless nodes become
/// leaves drawn from `words`, the rest take labels from `labels`.
pub fn random_tree<R: Rng>(rng: &mut R, nodes: usize, labels: &[&str], words: &[&str]) -> ParseTree {
    let nodes = nodes.max(2);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for i in 1..nodes {
        let parent = rng.gen_range(0..i);
        children[parent].push(i);
    }
    let mut names: Vec<&str> = Vec::with_capacity(nodes);
    for kids in &children {
        names.push(if kids.is_empty() {
            words[rng.gen_range(0..words.len())]
        } else {
            labels[rng.gen_range(0..labels.len())]
        });
    }
    fn build(i: usize, children: &[Vec<usize>], names: &[&str]) -> ParseTree {
        if children[i].is_empty() {
            ParseTree::leaf(names[i])
        } else {
            ParseTree::node(
                names[i],
                children[i].iter().map(|&c| build(c, children, names)).collect(),
            )
        }
    }
    build(0, &children, &names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_bracketed;

    fn t(s: &str) -> ParseTree {
        parse_bracketed(s).unwrap().remove(0)
    }

    #[test]
    fn sst_fragment_count_of_small_tree() {
        // fragments at S: 4 (each child cut or expanded), NP: 1, VP: 1
        let x = t("(S (NP a) (VP b))");
        assert_eq!(sst_bruteforce(&x, &x, 1.0), 6.0);
    }

    #[test]
    fn ptk_single_preterminal() {
        // leaf a: 1 fragment; X: alone or with child a → 3 at λ = μ = 1
        let x = t("(X a)");
        assert!((ptk_bruteforce(&x, &x, 1.0, 1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_tree_has_requested_size() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 2..=8 {
            let tr = random_tree(&mut rng, n, &["A", "B"], &["x"]);
            assert_eq!(tr.node_count(), n);
        }
    }
}
