//! Tree kernels over REL-tagged macro-trees and the question-pair kernel
//!
//! `K(<a1,a2>, <b1,b2>) = TK(t(a1,a2), t(b1,b2)) + TK(t(a2,a1), t(b2,b1))`
//!
//! with each summand optionally normalized to `[0, 1]`.

mod gram;
mod indexed;
mod ptk;
mod sst;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::QuestionPair;
use crate::syntax::{build_macro_tree, ParseTree, SyntaxError, TreeOptions};

pub use gram::{compute_gram, compute_prepared_gram, GramMatrix};
pub use indexed::IndexedTree;
pub use ptk::{ptk_indexed, ptk_kernel};
pub use sst::{sst_indexed, sst_kernel};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel config: {0}")]
    Config(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("gram cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot build a gram matrix from zero pairs")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Sst,
    Ptk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Fragment decay; gap decay for PTK.
    pub lambda: f64,
    /// PTK depth decay.
    pub mu: f64,
    pub normalize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Sst,
            lambda: 0.4,
            mu: 0.4,
            normalize: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(self.lambda) {
            return Err(KernelError::Config(format!("lambda {} not in (0,1]", self.lambda)));
        }
        if self.kind == KernelKind::Ptk && !ok(self.mu) {
            return Err(KernelError::Config(format!("mu {} not in (0,1]", self.mu)));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the kernel parameters.
    pub fn fingerprint(&self) -> u64 {
        let repr = format!(
            "{:?}|{:016x}|{:016x}|{}",
            self.kind,
            self.lambda.to_bits(),
            self.mu.to_bits(),
            self.normalize
        );
        let digest = Sha256::digest(repr.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Raw (unnormalized) kernel between two indexed trees.
pub fn tree_kernel(a: &IndexedTree, b: &IndexedTree, cfg: &KernelConfig) -> f64 {
    match cfg.kind {
        KernelKind::Sst => sst_indexed(a, b, cfg.lambda),
        KernelKind::Ptk => ptk_indexed(a, b, cfg.lambda, cfg.mu),
    }
}

/// `k_xy / sqrt(k_xx * k_yy)`, or 0 when either self-kernel vanishes.
pub fn normalized_kernel(k_xy: f64, k_xx: f64, k_yy: f64) -> f64 {
    if k_xx <= 0.0 || k_yy <= 0.0 {
        return 0.0;
    }
    k_xy / (k_xx * k_yy).sqrt()
}

/// Both directed macro-trees of a pair with their self-kernels cached.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub forward: IndexedTree,
    pub backward: IndexedTree,
    pub self_forward: f64,
    pub self_backward: f64,
}

impl PreparedPair {
    pub fn new(
        pair: &QuestionPair,
        cfg: &KernelConfig,
        opts: TreeOptions,
    ) -> Result<Self, KernelError> {
        let forward = IndexedTree::new(&build_macro_tree(&pair.q1, &pair.q2, opts)?.root);
        let backward = IndexedTree::new(&build_macro_tree(&pair.q2, &pair.q1, opts)?.root);
        Ok(Self::from_trees(forward, backward, cfg))
    }

    pub fn from_trees(forward: IndexedTree, backward: IndexedTree, cfg: &KernelConfig) -> Self {
        let self_forward = tree_kernel(&forward, &forward, cfg);
        let self_backward = tree_kernel(&backward, &backward, cfg);
        Self {
            forward,
            backward,
            self_forward,
            self_backward,
        }
    }
}

pub fn prepared_pair_kernel(a: &PreparedPair, b: &PreparedPair, cfg: &KernelConfig) -> f64 {
    let fwd = tree_kernel(&a.forward, &b.forward, cfg);
    let bwd = tree_kernel(&a.backward, &b.backward, cfg);
    if cfg.normalize {
        normalized_kernel(fwd, a.self_forward, b.self_forward)
            + normalized_kernel(bwd, a.self_backward, b.self_backward)
    } else {
        fwd + bwd
    }
}

pub fn pair_kernel(
    p: &QuestionPair,
    q: &QuestionPair,
    cfg: &KernelConfig,
) -> Result<f64, KernelError> {
    cfg.validate()?;
    let opts = TreeOptions::default();
    let a = PreparedPair::new(p, cfg, opts)?;
    let b = PreparedPair::new(q, cfg, opts)?;
    Ok(prepared_pair_kernel(&a, &b, cfg))
}

/// Convenience: kernel between two plain trees under `cfg`, normalized if
/// requested.
pub fn kernel_value(a: &ParseTree, b: &ParseTree, cfg: &KernelConfig) -> f64 {
    let (a, b) = (IndexedTree::new(a), IndexedTree::new(b));
    let k = tree_kernel(&a, &b, cfg);
    if cfg.normalize {
        normalized_kernel(k, tree_kernel(&a, &a, cfg), tree_kernel(&b, &b, cfg))
    } else {
        k
    }
}
