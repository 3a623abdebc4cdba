//! Structure distillation for question-pair similarity.
//!
//! A tree-kernel SVM trained on a small gold set labels a large unlabeled
//! pair corpus; compact neural pair classifiers are pre-trained on those
//! automatic labels and fine-tuned on gold.

pub mod corpus;
pub mod syntax;
pub mod oracle;
pub mod treekernel;
pub mod lexfeats;
pub mod kernelsvm;
pub mod neural;
pub mod eval;
pub mod pipeline;
