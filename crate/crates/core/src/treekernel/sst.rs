use super::IndexedTree;
use crate::syntax::ParseTree;

/// Collins–Duffy subset-tree kernel: the sum over node pairs of `C(n1, n2)`,
/// where `C` is 0 for different productions, `λ` for matching preterminals
/// and `λ Π (1 + C(child_i, child'_i))` otherwise.
pub fn sst_kernel(t1: &ParseTree, t2: &ParseTree, lambda: f64) -> f64 {
    sst_indexed(&IndexedTree::new(t1), &IndexedTree::new(t2), lambda)
}

pub fn sst_indexed(a: &IndexedTree, b: &IndexedTree, lambda: f64) -> f64 {
    let m = b.nodes.len();
    let mut c = vec![0.0f64; a.nodes.len() * m];
    let mut total = 0.0;
    for (i, na) in a.nodes.iter().enumerate() {
        if na.leaf {
            continue;
        }
        for (j, nb) in b.nodes.iter().enumerate() {
            if nb.leaf || na.production_key != nb.production_key || na.production != nb.production
            {
                continue;
            }
            let v = if na.preterminal {
                lambda
            } else {
                na.children
                    .iter()
                    .zip(&nb.children)
                    .fold(lambda, |acc, (&ci, &cj)| acc * (1.0 + c[ci * m + cj]))
            };
            c[i * m + j] = v;
            total += v;
        }
    }
    total
}
