//! A small synthetic treebank with a compositional label.
//!
//! Each sentence holds exactly one polar word among fillers. About half the
//! sentences also contain `not` somewhere; the label is the word's polarity,
//! flipped when `not` is present. Bracketing is a uniformly random binary
//! split at every level, so the negation can sit anywhere in the tree.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::{binarize, BinaryTree, LabeledTree, Sample, Vocab};

pub const POSITIVE: [&str; 4] = ["good", "great", "fine", "nice"];
pub const NEGATIVE: [&str; 4] = ["bad", "awful", "poor", "dull"];
pub const FILLERS: [&str; 8] = ["the", "movie", "was", "a", "plot", "story", "very", "really"];
pub const NEGATION: &str = "not";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// How many of [`FILLERS`] are used.
    pub fillers: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            samples: 200,
            min_len: 3,
            max_len: 7,
            fillers: 4,
            seed: 7,
        }
    }
}

/// The `train`, `dev` and `test` splits shipped under `data/toy/`: 200, 100
/// and 200 sentences from independent seeds.
pub fn toy_splits() -> [(&'static str, ToyConfig); 3] {
    let base = ToyConfig::default();
    [
        ("train", base),
        ("dev", ToyConfig { samples: 100, seed: 8, ..base }),
        ("test", ToyConfig { seed: 9, ..base }),
    ]
}

/// Uniformly random binary bracketing of `tokens` (non-empty). Internal
/// nodes are labeled `*`.
pub fn random_bracketing<R: Rng>(tokens: &[String], rng: &mut R) -> LabeledTree {
    if tokens.len() == 1 {
        return LabeledTree::Token(tokens[0].clone());
    }
    let split = rng.gen_range(1..tokens.len());
    LabeledTree::Node {
        label: Some("*".into()),
        children: vec![
            random_bracketing(&tokens[..split], rng),
            random_bracketing(&tokens[split..], rng),
        ],
    }
}

/// A randomly bracketed tree of `leaves` tokens drawn from the known words
/// of `vocab`, already indexed.
pub fn random_tree<R: Rng>(leaves: usize, vocab: &Vocab, rng: &mut R) -> BinaryTree {
    assert!(leaves > 0 && vocab.len() > 1, "need at least one leaf and one known word");
    let tokens: Vec<String> = (0..leaves)
        .map(|_| vocab.token(rng.gen_range(1..vocab.len())).unwrap().to_string())
        .collect();
    let mut tree = binarize(&random_bracketing(&tokens, rng));
    tree.index_with(vocab);
    tree
}

/// One labeled sentence: tokens in order and the class (1 positive, 0
/// negative).
pub fn toy_sentence<R: Rng>(config: &ToyConfig, rng: &mut R) -> (LabeledTree, usize) {
    let len = rng.gen_range(config.min_len.max(2)..=config.max_len.max(config.min_len.max(2)));
    let positive = rng.gen_bool(0.5);
    let negated = rng.gen_bool(0.5);
    let polar = if positive { &POSITIVE } else { &NEGATIVE };
    let mut tokens = vec![polar.choose(rng).unwrap().to_string()];
    if negated {
        tokens.push(NEGATION.to_string());
    }
    while tokens.len() < len {
        tokens.push(FILLERS[..config.fillers.clamp(1, FILLERS.len())].choose(rng).unwrap().to_string());
    }
    tokens.shuffle(rng);
    let label = usize::from(positive != negated);
    let mut tree = random_bracketing(&tokens, rng);
    if let LabeledTree::Node { label: l, .. } = &mut tree {
        *l = Some(label.to_string());
    } else {
        unreachable!("sentences have at least two tokens");
    }
    (tree, label)
}

/// Dataset lines in the bracketed one-tree-per-line format.
pub fn toy_treebank_lines(config: &ToyConfig) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.samples)
        .map(|_| toy_sentence(config, &mut rng).0.to_sexpr())
        .collect()
}

/// The same data as parsed samples with sequential ids.
pub fn toy_treebank(config: &ToyConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.samples)
        .map(|id| {
            let (tree, label) = toy_sentence(config, &mut rng);
            Sample {
                id,
                tree: binarize(&tree),
                label,
            }
        })
        .collect()
}
