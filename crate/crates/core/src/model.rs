//! A complete model (composer, task head, embeddings, vocabulary) and its
//! checkpoint format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composers::{composer_layout, encode_tree, Composer, NodeState, ParamSpec, Sizes, Variant};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tasks::{classify_logits, head_layout, match_logits, Head, Task, MATCH_CLASSES};
use crate::tensor::{softmax, Tensor};
use crate::treebank::{BinaryTree, PairSample, Sample, Vocab};

pub const EMBEDDING: &str = "embed.E";

/// Architecture hyperparameters stored with every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub task: Task,
    pub sizes: Sizes,
    /// Class count for classification; always 3 for matching.
    pub classes: usize,
    /// Width of the matcher's hidden layer.
    pub hidden: usize,
    pub rich_merge: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.sizes.validate(self.variant)?;
        match self.task {
            Task::Classify if self.classes < 2 => {
                Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)))
            }
            Task::Match if self.classes != MATCH_CLASSES => Err(Error::Config(format!(
                "matching uses {MATCH_CLASSES} classes, got {}",
                self.classes
            ))),
            Task::Match if self.hidden == 0 => Err(Error::Config("hidden width must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Every stored parameter in canonical order: composer, head, embeddings.
    pub fn layout(&self, vocab_len: usize) -> Vec<ParamSpec> {
        let mut specs = composer_layout(self.variant, self.sizes);
        specs.extend(head_layout(
            self.task,
            self.sizes.d,
            self.classes,
            self.hidden,
            self.rich_merge,
        ));
        specs.push(ParamSpec {
            name: EMBEDDING.to_string(),
            kind: ParamKind::Embedding,
            rows: vocab_len,
            cols: self.sizes.e,
        });
        specs
    }
}

#[derive(Debug, Clone)]
struct Resolved {
    composer: Composer<ParamId>,
    head: Head<ParamId>,
    embeddings: ParamId,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocab,
    params: ParamStore,
    ids: Resolved,
}

impl Model {
    /// Wraps a parameter store, checking that it holds exactly the
    /// parameters the configuration requires.
    pub fn new(config: ModelConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = config.layout(vocab.len());
        for spec in &layout {
            params.id_with_shape(&spec.name, spec.rows, spec.cols)?;
        }
        if params.len() != layout.len() {
            let extra: Vec<_> = params
                .iter()
                .filter(|(_, p)| !layout.iter().any(|s| s.name == p.name))
                .map(|(_, p)| p.name.clone())
                .collect();
            return Err(Error::Checkpoint(format!("unexpected parameters {extra:?}")));
        }
        let ids = Resolved {
            composer: Composer::resolve(&params, config.variant, config.sizes)?,
            head: Head::resolve(
                &params,
                config.task,
                config.sizes.d,
                config.classes,
                config.hidden,
                config.rich_merge,
            )?,
            embeddings: params.id(EMBEDDING)?,
        };
        Ok(Model {
            config,
            vocab,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embeddings_id(&self) -> ParamId {
        self.ids.embeddings
    }

    /// Encodes `tree` on `tape` using `params` (normally [`Model::params`];
    /// gradient checks pass perturbed copies).
    pub fn encode_with(&self, tape: &mut Tape, params: &ParamStore, tree: &BinaryTree) -> Result<Vec<NodeState<NodeId>>> {
        let composer = self.ids.composer.bind(tape, params)?;
        encode_tree(tape, params, &composer, self.ids.embeddings, tree, self.config.sizes)
    }

    /// Per-node states of `tree` as plain tensors, root last.
    pub fn encode(&self, tree: &BinaryTree) -> Result<Vec<NodeState<Tensor>>> {
        let mut tape = Tape::new();
        let states = self.encode_with(&mut tape, &self.params, tree)?;
        Ok(states.iter().map(|s| s.map(|id| tape.value(*id).clone())).collect())
    }

    fn head(&self, tape: &mut Tape, params: &ParamStore) -> Result<Head<NodeId>> {
        self.ids.head.bind(tape, params)
    }

    pub fn classify_logits_with(&self, tape: &mut Tape, params: &ParamStore, tree: &BinaryTree) -> Result<NodeId> {
        let states = self.encode_with(tape, params, tree)?;
        let root = states.last().expect("non-empty tree").h;
        match self.head(tape, params)? {
            Head::Classifier(c) => Ok(classify_logits(tape, root, &c)?),
            Head::Matcher(_) => Err(Error::TaskMismatch {
                expected: "match",
                found: "classify",
            }),
        }
    }

    /// Both trees are encoded by the same composer parameters; for dynamic
    /// variants that means one shared meta network emits separate per-node
    /// weights for each sentence.
    pub fn match_logits_with(&self, tape: &mut Tape, params: &ParamStore, a: &BinaryTree, b: &BinaryTree) -> Result<NodeId> {
        let ha = self.encode_with(tape, params, a)?.last().expect("non-empty tree").h;
        let hb = self.encode_with(tape, params, b)?.last().expect("non-empty tree").h;
        match self.head(tape, params)? {
            Head::Matcher(m) => Ok(match_logits(tape, ha, hb, &m, self.config.rich_merge)?),
            Head::Classifier(_) => Err(Error::TaskMismatch {
                expected: "classify",
                found: "match",
            }),
        }
    }

    /// Class distribution for one sentence.
    pub fn classify(&self, tree: &BinaryTree) -> Result<Tensor> {
        let mut tape = Tape::new();
        let logits = self.classify_logits_with(&mut tape, &self.params, tree)?;
        Ok(softmax(tape.value(logits)))
    }

    /// Distribution over (entailment, contradiction, neutral) for a pair.
    pub fn match_pair(&self, a: &BinaryTree, b: &BinaryTree) -> Result<Tensor> {
        let mut tape = Tape::new();
        let logits = self.match_logits_with(&mut tape, &self.params, a, b)?;
        Ok(softmax(tape.value(logits)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_checkpoint_str(&text)
    }

    /// Canonical JSON serialization; identical models produce identical bytes.
    pub fn to_checkpoint_string(&self) -> String {
        let ck = Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self
                .params
                .iter()
                .map(|(_, p)| StoredParam {
                    name: p.name.clone(),
                    kind: p.kind,
                    shape: [p.value.rows(), p.value.cols()],
                    data: p.value.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?} version {}",
                ck.format, ck.version
            )));
        }
        let mut store = ParamStore::new();
        for p in ck.params {
            if store.id(&p.name).is_ok() {
                return Err(Error::Checkpoint(format!("duplicate parameter {:?}", p.name)));
            }
            let t = Tensor::from_vec(p.shape[0], p.shape[1], p.data)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
            store.insert(p.name, p.kind, t);
        }
        Model::new(ck.config, ck.vocab, store)
    }
}

const FORMAT: &str = "dctree-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredParam {
    name: String,
    kind: ParamKind,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vocab,
    params: Vec<StoredParam>,
}

/// A supervised example the training loop can consume.
pub trait Example: Sync {
    const TASK: Task;

    fn id(&self) -> usize;

    fn gold(&self) -> usize;

    /// Records the forward pass on `tape` and returns the logits node.
    fn logits(&self, model: &Model, tape: &mut Tape, params: &ParamStore) -> Result<NodeId>;
}

impl Example for Sample {
    const TASK: Task = Task::Classify;

    fn id(&self) -> usize {
        self.id
    }

    fn gold(&self) -> usize {
        self.label
    }

    fn logits(&self, model: &Model, tape: &mut Tape, params: &ParamStore) -> Result<NodeId> {
        model.classify_logits_with(tape, params, &self.tree)
    }
}

impl Example for PairSample {
    const TASK: Task = Task::Match;

    fn id(&self) -> usize {
        self.id
    }

    fn gold(&self) -> usize {
        self.label
    }

    fn logits(&self, model: &Model, tape: &mut Tape, params: &ParamStore) -> Result<NodeId> {
        model.match_logits_with(tape, params, &self.a, &self.b)
    }
}
