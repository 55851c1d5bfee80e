#![allow(dead_code)]

pub mod oracle;

use dctree::composers::{Sizes, Variant};
use dctree::model::{Model, ModelConfig};
use dctree::tasks::Task;
use dctree::training::init_params_with_bound;
use dctree::treebank::{binarize, BinaryTree, LabeledTree, Sample, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB_WORDS: usize = 6;

pub fn vocab() -> Vocab {
    Vocab::from_tokens((0..VOCAB_WORDS).map(|i| format!("w{i}")))
}

fn random_labeled<R: Rng>(tokens: &[String], rng: &mut R) -> LabeledTree {
    if tokens.len() == 1 {
        return LabeledTree::Token(tokens[0].clone());
    }
    let split = rng.gen_range(1..tokens.len());
    LabeledTree::Node {
        label: Some("*".into()),
        children: vec![random_labeled(&tokens[..split], rng), random_labeled(&tokens[split..], rng)],
    }
}

/// A random full binary tree over `leaves` tokens drawn from [`vocab`],
/// already indexed.
pub fn random_tree<R: Rng>(leaves: usize, rng: &mut R) -> BinaryTree {
    let tokens: Vec<String> = (0..leaves)
        .map(|_| format!("w{}", rng.gen_range(0..VOCAB_WORDS)))
        .collect();
    let mut tree = binarize(&random_labeled(&tokens, rng));
    tree.index_with(&vocab());
    tree
}

pub fn random_sample<R: Rng>(id: usize, leaves: usize, classes: usize, rng: &mut R) -> Sample {
    Sample {
        id,
        tree: random_tree(leaves, rng),
        label: rng.gen_range(0..classes),
    }
}

pub fn sizes_for(variant: Variant, d: usize, m: usize, z: usize) -> Sizes {
    // The TreeLSTM family reads embeddings directly, so e = d everywhere.
    let _ = variant;
    Sizes::new(d, d, m, z)
}

pub fn classify_config(variant: Variant, sizes: Sizes, classes: usize) -> ModelConfig {
    ModelConfig {
        variant,
        task: Task::Classify,
        sizes,
        classes,
        hidden: 2 * sizes.d,
        rich_merge: false,
    }
}

/// A model over [`vocab`] with every parameter drawn from `U[-bound, bound]`.
pub fn random_model<R: Rng>(config: ModelConfig, bound: f64, rng: &mut R) -> Model {
    let vocab = vocab();
    let params = init_params_with_bound(&config, &vocab, None, bound, rng).unwrap();
    Model::new(config, vocab, params).unwrap()
}

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// The gradient-check fixture for one seed: a fresh 3-class model at
/// d=4, m=3, z=2 with every parameter in `U[-1, 1]`, and one random tree of
/// 3 to 7 leaves with a random gold label.
pub fn gradcheck_fixture(variant: Variant, seed: u64) -> (Model, Sample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(classify_config(variant, sizes_for(variant, 4, 3, 2), 3), 1.0, &mut rng);
    let leaves = rng.gen_range(3..=7);
    let sample = random_sample(0, leaves, 3, &mut rng);
    (model, sample)
}
