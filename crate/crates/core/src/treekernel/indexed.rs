use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::syntax::ParseTree;

fn key(s: &str) -> u64 {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone)]
pub(crate) struct IndexedNode {
    pub label: String,
    pub label_key: u64,
    /// `label → child labels`, leaves marked; empty for leaves.
    pub production: String,
    pub production_key: u64,
    pub children: Vec<usize>,
    pub leaf: bool,
    pub preterminal: bool,
}

/// A tree flattened into post-order, so every child index is smaller than
/// its parent's. Kernel dynamic programs fill their tables in this order.
#[derive(Debug, Clone)]
pub struct IndexedTree {
    pub(crate) nodes: Vec<IndexedNode>,
}

impl IndexedTree {
    pub fn new(tree: &ParseTree) -> Self {
        let mut nodes = Vec::with_capacity(tree.node_count());
        Self::push(tree, &mut nodes);
        Self { nodes }
    }

    fn push(tree: &ParseTree, nodes: &mut Vec<IndexedNode>) -> usize {
        let children: Vec<usize> = tree.children.iter().map(|c| Self::push(c, nodes)).collect();
        let leaf = tree.is_leaf();
        let production = if leaf {
            String::new()
        } else {
            let mut p = tree.label.clone();
            p.push_str(" ->");
            for c in &tree.children {
                p.push(' ');
                if c.is_leaf() {
                    p.push('\'');
                }
                p.push_str(&c.label);
            }
            p
        };
        nodes.push(IndexedNode {
            label_key: key(&tree.label),
            label: tree.label.clone(),
            production_key: key(&production),
            production,
            children,
            leaf,
            preterminal: tree.is_preterminal(),
        });
        nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
