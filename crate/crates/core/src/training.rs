//! Loss, optimizer, initialization and the train/evaluate loops.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::composers::{Sizes, Variant};
use crate::error::{Error, Result, TensorError};
use crate::gradcheck::{finite_diff_check, GradCheckReport};
use crate::model::{Example, Model, ModelConfig};
use crate::parallel::{self, Execution};
use crate::params::{ParamGrads, ParamKind, ParamSlot, ParamStore};
use crate::tape::{Fault, Tape};
use crate::tasks::{Task, MATCH_CLASSES};
use crate::tensor::{log_sum_exp, softmax, Tensor};
use crate::treebank::{Vocab, INIT_BOUND};

/// Every knob of a training run. Keys of the flat config file are the field
/// names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub task: Task,
    pub d: usize,
    pub e: usize,
    pub m: usize,
    pub z: usize,
    pub classes: usize,
    /// Matcher hidden width; `2d` when unset.
    pub hidden: Option<usize>,
    pub rich_merge: bool,
    pub lr: f64,
    pub l2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub eval_every: usize,
    pub min_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::DcTreelstm,
            task: Task::Classify,
            d: 100,
            e: 100,
            m: 20,
            z: 20,
            classes: 2,
            hidden: None,
            rich_merge: false,
            lr: 0.1,
            l2: 1e-5,
            epsilon: 1e-8,
            epochs: 10,
            seed: 1,
            dataset: None,
            dev: None,
            embeddings: None,
            eval_every: 1,
            min_count: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    /// Sets one field from its textual value. `-` and `_` are interchangeable
    /// in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "variant" => self.variant = value.parse()?,
            "task" => self.task = value.parse()?,
            "d" => self.d = parse_num(key, value)?,
            "e" => self.e = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "z" => self.z = parse_num(key, value)?,
            "classes" => self.classes = parse_num(key, value)?,
            "hidden" => self.hidden = Some(parse_num(key, value)?),
            "rich_merge" => self.rich_merge = parse_bool(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "l2" => self.l2 = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "dev" => self.dev = Some(PathBuf::from(value)),
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "min_count" => self.min_count = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; blank lines and `#` comments are ignored.
    /// Relative paths are kept as written.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn sizes(&self) -> Sizes {
        Sizes::new(self.d, self.e, self.m, self.z)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            task: self.task,
            sizes: self.sizes(),
            classes: match self.task {
                Task::Classify => self.classes,
                Task::Match => MATCH_CLASSES,
            },
            hidden: self.hidden.unwrap_or(2 * self.d),
            rich_merge: self.rich_merge,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            lr: self.lr,
            l2: self.l2,
            epsilon: self.epsilon,
            seed: self.seed,
            eval_every: self.eval_every,
            exec: Execution::default(),
        }
    }
}

/// `-ln(pred[gold])` for an already-normalized distribution.
pub fn cross_entropy(pred: &Tensor, gold: usize) -> Result<f64, TensorError> {
    if gold >= pred.len() {
        return Err(TensorError::ClassOutOfRange {
            gold,
            classes: pred.len(),
        });
    }
    Ok(-pred.data()[gold].ln())
}

/// `logsumexp(logits) - logits[gold]`, the same quantity computed without
/// forming probabilities.
pub fn cross_entropy_logits(logits: &Tensor, gold: usize) -> Result<f64, TensorError> {
    if gold >= logits.len() {
        return Err(TensorError::ClassOutOfRange {
            gold,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits.data()) - logits.data()[gold])
}

/// Diagonal AdaGrad with L2 coupled into the gradient:
/// `g' = g + l2·θ`, `G += g'²`, `θ -= lr·g' / (√G + ε)`.
///
/// Biases and embeddings are not decayed. Embedding rows are updated only
/// when a step touches them, which is exact because their decay is zero.
#[derive(Debug, Clone)]
pub struct AdaGrad {
    pub lr: f64,
    pub l2: f64,
    pub epsilon: f64,
    accum: Vec<Tensor>,
}

impl AdaGrad {
    pub fn new(params: &ParamStore, lr: f64, l2: f64, epsilon: f64) -> Self {
        AdaGrad {
            lr,
            l2,
            epsilon,
            accum: params
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accum
    }

    fn update(&self, theta: &mut [f64], state: &mut [f64], grad: &[f64], decay: f64) {
        for ((t, s), g) in theta.iter_mut().zip(state.iter_mut()).zip(grad) {
            let g = g + decay * *t;
            *s += g * g;
            *t -= self.lr * g / (s.sqrt() + self.epsilon);
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if self.accum.len() != params.len() {
            return Err(Error::Config("optimizer state does not match parameters".into()));
        }
        let ids: Vec<_> = params.iter().map(|(id, p)| (id, p.kind)).collect();
        for (id, kind) in ids {
            let decay = if kind.decays() { self.l2 } else { 0.0 };
            let g = grads.get(ParamSlot::Whole(id));
            if g.is_none() && decay == 0.0 {
                continue;
            }
            let theta = params.get_mut(id);
            let zeros;
            let g = match g {
                Some(g) => {
                    if g.shape() != theta.shape() {
                        return Err(TensorError::shape("adagrad", theta, g).into());
                    }
                    g
                }
                None => {
                    zeros = Tensor::zeros(theta.rows(), theta.cols());
                    &zeros
                }
            };
            let mut state = std::mem::replace(&mut self.accum[id.index()], Tensor::zeros(0, 0));
            self.update(theta.data_mut(), state.data_mut(), g.data(), decay);
            self.accum[id.index()] = state;
        }
        for (slot, g) in grads.iter() {
            let ParamSlot::Row(id, row) = *slot else { continue };
            let decay = if params.param(id).kind.decays() { self.l2 } else { 0.0 };
            let theta = params.get_mut(id);
            if row >= theta.rows() || g.len() != theta.cols() {
                return Err(TensorError::shape("adagrad", theta, g).into());
            }
            let mut state = std::mem::replace(&mut self.accum[id.index()], Tensor::zeros(0, 0));
            self.update(theta.row_mut(row), state.row_mut(row), g.data(), decay);
            self.accum[id.index()] = state;
        }
        Ok(())
    }
}

/// Draws every non-embedding parameter from `U[-0.1, 0.1]` in canonical
/// order. `embeddings`, when given, must be `|V| × e`; otherwise embeddings
/// are drawn from the same distribution.
pub fn init_params<R: Rng + ?Sized>(
    config: &ModelConfig,
    vocab: &Vocab,
    embeddings: Option<Tensor>,
    rng: &mut R,
) -> Result<ParamStore> {
    init_params_with_bound(config, vocab, embeddings, INIT_BOUND, rng)
}

/// [`init_params`] with a custom half-width.
pub fn init_params_with_bound<R: Rng + ?Sized>(
    config: &ModelConfig,
    vocab: &Vocab,
    mut embeddings: Option<Tensor>,
    bound: f64,
    rng: &mut R,
) -> Result<ParamStore> {
    config.validate()?;
    let mut store = ParamStore::new();
    for spec in config.layout(vocab.len()) {
        let value = match (spec.kind, embeddings.take()) {
            (ParamKind::Embedding, Some(e)) => {
                if e.shape() != (spec.rows, spec.cols) {
                    return Err(Error::ParamShape {
                        name: spec.name,
                        expected: crate::error::Dims(spec.rows, spec.cols),
                        found: (&e).into(),
                    });
                }
                e
            }
            (_, taken) => {
                embeddings = taken;
                Tensor::uniform(spec.rows, spec.cols, bound, rng)
            }
        };
        store.insert(spec.name, spec.kind, value);
    }
    Ok(store)
}

/// Builds a freshly initialized model. Embeddings are read from
/// `config.embeddings` when set.
pub fn build_model(config: &RunConfig, vocab: Vocab) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embeddings = match &config.embeddings {
        Some(path) => Some(crate::treebank::load_embeddings(path, &vocab, config.e, &mut rng)?),
        None => None,
    };
    let mc = config.model_config();
    let params = init_params(&mc, &vocab, embeddings, &mut rng)?;
    Model::new(mc, vocab, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub exec: Execution,
}

impl Default for TrainOptions {
    fn default() -> Self {
        RunConfig::default().train_options()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub dev_acc: Option<f64>,
}

/// Writes `epoch,train_loss,train_acc,dev_acc`; missing dev accuracy is an
/// empty field.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,dev_acc\n");
    for m in history {
        let dev = m.dev_acc.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", m.epoch, m.train_loss, m.train_acc, dev));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-dev model when a dev set was given, otherwise the final one.
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
}

fn check_task<E: Example>(model: &Model) -> Result<()> {
    if model.config().task != E::TASK {
        return Err(Error::TaskMismatch {
            expected: model.config().task.name(),
            found: E::TASK.name(),
        });
    }
    Ok(())
}

/// Loss and parameter gradients for one example.
pub fn example_gradients<E: Example>(
    model: &Model,
    params: &ParamStore,
    example: &E,
    fault: Option<Fault>,
) -> Result<(f64, ParamGrads)> {
    let mut tape = Tape::with_fault(fault);
    let logits = example.logits(model, &mut tape, params)?;
    let loss = tape.cross_entropy(logits, example.gold())?;
    let value = tape.value(loss).item().expect("scalar loss");
    Ok((value, tape.backward(loss)?.into_params()))
}

/// Loss only, for finite-difference probes.
pub fn example_loss<E: Example>(model: &Model, params: &ParamStore, example: &E) -> Result<f64> {
    let mut tape = Tape::new();
    let logits = example.logits(model, &mut tape, params)?;
    Ok(cross_entropy_logits(tape.value(logits), example.gold())?)
}

/// Compares backpropagated gradients with central differences on every
/// parameter entry, for each example, keeping the worst error per parameter.
pub fn gradient_check<E: Example>(
    model: &Model,
    examples: &[E],
    eps: f64,
    fault: Option<Fault>,
) -> Result<GradCheckReport> {
    check_task::<E>(model)?;
    let mut report = GradCheckReport::default();
    for ex in examples {
        let (_, analytic) = example_gradients(model, model.params(), ex, fault)?;
        let r = finite_diff_check(|p| example_loss(model, p, ex), model.params(), &analytic, eps)?;
        report.merge(&r);
    }
    Ok(report)
}

/// Plain SGD over single examples in a seeded shuffled order, one AdaGrad
/// step per example.
pub fn train<E: Example>(
    mut model: Model,
    train_set: &[E],
    dev_set: Option<&[E]>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    check_task::<E>(&model)?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut opt = AdaGrad::new(model.params(), opts.lr, opts.l2, opts.epsilon);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    // (dev accuracy, dev loss, epoch, params)
    let mut best: Option<(f64, f64, usize, ParamStore)> = None;

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = example_gradients(&model, model.params(), &train_set[i], None)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss;
            opt.step(model.params_mut(), &grads)?;
        }
        let train_loss = total / train_set.len() as f64;
        let train_acc = evaluate(&model, train_set, opts.exec)?.accuracy;
        let dev = match dev_set {
            Some(dev) if epoch % opts.eval_every == 0 || epoch == opts.epochs => {
                Some(evaluate(&model, dev, opts.exec)?)
            }
            _ => None,
        };
        if let Some(report) = &dev {
            // Equal accuracy on a small dev set is common; the lower dev loss
            // wins the tie.
            let better = best.as_ref().map_or(true, |(acc, loss, _, _)| {
                report.accuracy > *acc || (report.accuracy == *acc && report.loss < *loss)
            });
            if better {
                best = Some((report.accuracy, report.loss, epoch, model.params().clone()));
            }
        }
        let dev_acc = dev.map(|r| r.accuracy);
        history.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            dev_acc,
        });
    }

    let best_epoch = best.as_ref().map(|(_, _, e, _)| *e);
    if let Some((_, _, _, params)) = best {
        *model.params_mut() = params;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: usize,
    pub gold: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean cross-entropy of the gold labels.
    pub loss: f64,
    pub predictions: Vec<Prediction>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predictions: &[Prediction]) -> f64 {
    let correct = predictions.iter().filter(|p| p.gold == p.predicted).count();
    correct as f64 / predictions.len() as f64
}

/// Predicts every example without touching the parameters.
pub fn evaluate<E: Example>(model: &Model, data: &[E], exec: Execution) -> Result<EvalReport> {
    check_task::<E>(model)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scored = parallel::try_map(exec, data, |ex| -> Result<(Prediction, f64)> {
        let mut tape = Tape::new();
        let logits = ex.logits(model, &mut tape, model.params())?;
        let loss = cross_entropy_logits(tape.value(logits), ex.gold())?;
        let probs = softmax(tape.value(logits)).into_data();
        let prediction = Prediction {
            id: ex.id(),
            gold: ex.gold(),
            predicted: argmax(&probs),
            probs,
        };
        Ok((prediction, loss))
    })?;
    let loss = scored.iter().map(|(_, l)| l).sum::<f64>() / scored.len() as f64;
    let predictions: Vec<Prediction> = scored.into_iter().map(|(p, _)| p).collect();
    Ok(EvalReport {
        accuracy: accuracy(&predictions),
        loss,
        predictions,
    })
}

/// JSON-lines rendering of predictions: `id`, `gold`, `predicted`, `probs`.
pub fn predictions_jsonl(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}
