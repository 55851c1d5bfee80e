//! Treebank ingestion: bracketed-tree parsing, binarization, vocabularies,
//! pretrained embeddings and dataset files.

mod dataset;
mod embeddings;
mod sexpr;
mod tree;
mod vocab;

pub use dataset::{
    index_pairs, index_samples, load_pair_dataset, load_tree_dataset, pair_label_index,
    pair_sentences, parse_pair_dataset, parse_tree_dataset, sample_sentences, PairSample, Sample,
    PAIR_LABELS,
};
pub use embeddings::{load_embeddings, read_embeddings, INIT_BOUND};
pub use sexpr::{parse_sexpr, LabeledTree};
pub use tree::{binarize, BinaryTree, TreeNode};
pub use vocab::{build_vocab, Vocab, UNK, UNK_TOKEN};
