use super::IndexedTree;
use crate::syntax::ParseTree;

/// Partial tree kernel: `Δ(n1, n2) = μ (λ² + Σ_{J1,J2} λ^{d(J1)+d(J2)} Π Δ(c1[J1_k], c2[J2_k]))`
/// over equal-length child subsequences, summed over all node pairs
/// (leaves included) with equal labels.
pub fn ptk_kernel(t1: &ParseTree, t2: &ParseTree, lambda: f64, mu: f64) -> f64 {
    ptk_indexed(&IndexedTree::new(t1), &IndexedTree::new(t2), lambda, mu)
}

pub fn ptk_indexed(a: &IndexedTree, b: &IndexedTree, lambda: f64, mu: f64) -> f64 {
    let m = b.nodes.len();
    let mut delta = vec![0.0f64; a.nodes.len() * m];
    let mut total = 0.0;
    let l2 = lambda * lambda;
    for (i, na) in a.nodes.iter().enumerate() {
        for (j, nb) in b.nodes.iter().enumerate() {
            if na.label_key != nb.label_key || na.label != nb.label {
                continue;
            }
            let mut v = l2;
            if !na.children.is_empty() && !nb.children.is_empty() {
                v += child_subsequences(&na.children, &nb.children, &delta, m, lambda);
            }
            v *= mu;
            delta[i * m + j] = v;
            total += v;
        }
    }
    total
}

/// Sum over common child subsequences of every length, gap-weighted.
fn child_subsequences(ca: &[usize], cb: &[usize], delta: &[f64], m: usize, lambda: f64) -> f64 {
    let (p, q) = (ca.len(), cb.len());
    let l2 = lambda * lambda;
    let d = |i: usize, j: usize| delta[ca[i] * m + cb[j]];

    // kp[i][j]: subsequences of the current length ending exactly at (i, j).
    let mut kp = vec![0.0; p * q];
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..q {
            kp[i * q + j] = l2 * d(i, j);
            sum += kp[i * q + j];
        }
    }
    let mut dp = vec![0.0; p * q];
    for _ in 2..=p.min(q) {
        for i in 0..p {
            for j in 0..q {
                let up = if i > 0 { dp[(i - 1) * q + j] } else { 0.0 };
                let left = if j > 0 { dp[i * q + j - 1] } else { 0.0 };
                let diag = if i > 0 && j > 0 { dp[(i - 1) * q + j - 1] } else { 0.0 };
                dp[i * q + j] = kp[i * q + j] + lambda * (up + left) - l2 * diag;
            }
        }
        let mut any = false;
        for i in 0..p {
            for j in 0..q {
                kp[i * q + j] = if i > 0 && j > 0 {
                    d(i, j) * l2 * dp[(i - 1) * q + j - 1]
                } else {
                    0.0
                };
                sum += kp[i * q + j];
                any |= kp[i * q + j] != 0.0;
            }
        }
        if !any {
            break;
        }
    }
    sum
}
