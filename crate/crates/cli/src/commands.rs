use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dctree::analysis::{activations_csv, export_heatmap, record_activations, top_activating_phrases};
use dctree::composers::{count_params as count, Sizes, Variant};
use dctree::error::DataError;
use dctree::model::{Example, Model, ModelConfig};
use dctree::parallel::Execution;
use dctree::synth::random_tree;
use dctree::tape::Fault;
use dctree::tasks::Task;
use dctree::training::{
    build_model, evaluate, gradient_check, init_params_with_bound, metrics_csv, predictions_jsonl, train as fit,
    RunConfig, TrainOutcome,
};
use dctree::treebank::{
    build_vocab, index_pairs, index_samples, load_pair_dataset, load_tree_dataset, pair_sentences, sample_sentences,
    PairSample, Sample, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::RunArgs;

const GRADCHECK_CAP: usize = 8;
const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_EPS: f64 = 1e-5;

/// An error carrying its own exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    Failure {
        code,
        message: message.into(),
    }
    .into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<dctree::Error>() {
            use dctree::Error as E;
            return match e {
                E::Config(_) | E::UnknownParam(_) | E::ParamShape { .. } | E::TaskMismatch { .. } => 2,
                E::Data(_) | E::Checkpoint(_) | E::EmptyDataset | E::Tree(_) | E::Io(_) | E::Tensor(_) => 3,
                E::Diverged { .. } => 4,
                E::StaticVariant(_) => 6,
                E::NonDeterministic { .. } => 1,
            };
        }
        if cause.downcast_ref::<DataError>().is_some() {
            return 3;
        }
    }
    1
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

/// Defaults, then the config file (paths relative to the file), then flags.
pub fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| fail(2, format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        resolve(base, &mut cfg.dataset);
        resolve(base, &mut cfg.dev);
        resolve(base, &mut cfg.embeddings);
    }
    if let Some(v) = &args.variant {
        cfg.set("variant", v)?;
    }
    if let Some(t) = &args.task {
        cfg.set("task", t)?;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            })*
        };
    }
    set!(seed, d, e, m, z, lr, l2, epochs);
    macro_rules! set_opt {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() {
                cfg.$field = Some(v);
            })*
        };
    }
    set_opt!(dataset, dev, embeddings);
    cfg.validate()?;
    Ok(cfg)
}

/// What the commands need from a dataset element beyond [`Example`].
trait Dataset: Example + Sized + Send {
    fn load(path: &Path, classes: usize) -> Result<Vec<Self>, DataError>;
    fn vocab(data: &[Self], min_count: usize) -> Vocab;
    fn index(data: &mut [Self], vocab: &Vocab);
}

impl Dataset for Sample {
    fn load(path: &Path, classes: usize) -> Result<Vec<Self>, DataError> {
        load_tree_dataset(path, classes)
    }

    fn vocab(data: &[Self], min_count: usize) -> Vocab {
        build_vocab(sample_sentences(data), min_count)
    }

    fn index(data: &mut [Self], vocab: &Vocab) {
        index_samples(data, vocab)
    }
}

impl Dataset for PairSample {
    fn load(path: &Path, _classes: usize) -> Result<Vec<Self>, DataError> {
        load_pair_dataset(path)
    }

    fn vocab(data: &[Self], min_count: usize) -> Vocab {
        build_vocab(pair_sentences(data), min_count)
    }

    fn index(data: &mut [Self], vocab: &Vocab) {
        index_pairs(data, vocab)
    }
}

struct Splits<E> {
    train: Vec<E>,
    dev: Option<Vec<E>>,
    vocab: Vocab,
}

fn load_splits<E: Dataset>(cfg: &RunConfig) -> Result<Splits<E>> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| fail(2, "no dataset given (set `dataset` or pass --dataset)"))?;
    let classes = cfg.model_config().classes;
    let mut train = E::load(path, classes)?;
    if train.is_empty() {
        return Err(fail(3, format!("dataset {} is empty", path.display())));
    }
    let vocab = E::vocab(&train, cfg.min_count);
    E::index(&mut train, &vocab);
    let dev = match &cfg.dev {
        Some(p) => {
            let mut dev = E::load(p, classes)?;
            E::index(&mut dev, &vocab);
            Some(dev)
        }
        None => None,
    };
    Ok(Splits { train, dev, vocab })
}

fn run_training<E: Dataset>(cfg: &RunConfig, splits: Splits<E>) -> Result<TrainOutcome> {
    let model = build_model(cfg, splits.vocab)?;
    Ok(fit(model, &splits.train, splits.dev.as_deref(), &cfg.train_options())?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn train(args: &RunArgs, out: &Path) -> Result<()> {
    let cfg = run_config(args)?;
    let outcome = match cfg.task {
        Task::Classify => run_training(&cfg, load_splits::<Sample>(&cfg)?)?,
        Task::Match => run_training(&cfg, load_splits::<PairSample>(&cfg)?)?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join("checkpoint.json");
    outcome.model.save(&ckpt)?;
    write(&out.join("metrics.csv"), &metrics_csv(&outcome.history))?;
    if let Some(last) = outcome.history.last() {
        println!(
            "{} epochs: train loss {:.4}, train acc {:.4}{}",
            last.epoch,
            last.train_loss,
            last.train_acc,
            last.dev_acc.map(|a| format!(", dev acc {a:.4}")).unwrap_or_default()
        );
    }
    if let Some(best) = outcome.best_epoch {
        println!("kept epoch {best} (best dev accuracy)");
    }
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn eval_with<E: Dataset>(model: &Model, dataset: &Path, out: Option<&Path>) -> Result<()> {
    let mut data = E::load(dataset, model.config().classes)?;
    E::index(&mut data, model.vocab());
    let report = evaluate(model, &data, Execution::Parallel)?;
    println!("accuracy {:.4} over {} examples", report.accuracy, data.len());
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        write(&out.join("predictions.jsonl"), &predictions_jsonl(&report.predictions))?;
    }
    Ok(())
}

pub fn eval(checkpoint: &Path, dataset: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint)?;
    match model.config().task {
        Task::Classify => eval_with::<Sample>(&model, dataset, out),
        Task::Match => eval_with::<PairSample>(&model, dataset, out),
    }
}

pub fn gradcheck(variant: &str, d: usize, m: usize, z: usize, seed: u64, trees: usize, inject_fault: bool) -> Result<()> {
    let variant: Variant = variant.parse()?;
    if d > GRADCHECK_CAP || m > GRADCHECK_CAP || z > GRADCHECK_CAP {
        return Err(fail(
            2,
            format!("gradient checks are capped at d, m, z <= {GRADCHECK_CAP} (got d={d}, m={m}, z={z})"),
        ));
    }
    let config = ModelConfig {
        variant,
        task: Task::Classify,
        sizes: Sizes::new(d, d, m, z),
        classes: 3,
        hidden: 2 * d,
        rich_merge: false,
    };
    let vocab = Vocab::from_tokens((0..6).map(|i| format!("w{i}")));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params_with_bound(&config, &vocab, None, 1.0, &mut rng)?;
    let model = Model::new(config, vocab, params)?;
    let samples: Vec<Sample> = (0..trees.max(1))
        .map(|id| {
            let leaves = rng.gen_range(3..=7);
            Sample {
                id,
                tree: random_tree(leaves, model.vocab(), &mut rng),
                label: rng.gen_range(0..3),
            }
        })
        .collect();
    let fault = inject_fault.then_some(Fault::FlipTanhGrad);
    let report = gradient_check(&model, &samples, GRADCHECK_EPS, fault)?;
    for g in &report.groups {
        println!(
            "{:<14} {:>6} entries  rel err {:.3e}  worst entry {:.3e}",
            g.name, g.entries, g.rel_error, g.max_entry_error
        );
    }
    let failures = report.failures(GRADCHECK_TOL);
    if failures.is_empty() {
        println!("all {} groups below {GRADCHECK_TOL:e}", report.groups.len());
        Ok(())
    } else {
        let names: Vec<_> = failures.iter().map(|g| g.name.as_str()).collect();
        Err(fail(
            5,
            format!("gradient check failed (tolerance {GRADCHECK_TOL:e}) for: {}", names.join(", ")),
        ))
    }
}

fn sweep_dev_acc<E: Dataset>(cfg: &RunConfig, splits: &Splits<E>) -> Result<f64> {
    let model = build_model(cfg, splits.vocab.clone())?;
    let dev = splits.dev.as_deref().expect("checked by caller");
    let outcome = fit(model, &splits.train, Some(dev), &cfg.train_options())?;
    Ok(evaluate(&outcome.model, dev, Execution::Parallel)?.accuracy)
}

pub fn sweep_z(args: &RunArgs, z_list: &[usize], out: &Path) -> Result<()> {
    let cfg = run_config(args)?;
    if !cfg.variant.is_dynamic() {
        return Err(fail(2, format!("sweep-z needs a dynamic variant, got {}", cfg.variant)));
    }
    if cfg.dev.is_none() {
        return Err(fail(2, "sweep-z needs a dev set (set `dev` or pass --dev)"));
    }
    let mut seen = HashSet::new();
    for z in z_list {
        if *z == 0 {
            return Err(fail(2, "z values must be positive"));
        }
        if !seen.insert(z) {
            return Err(fail(2, format!("duplicate z value {z} in --z-list")));
        }
    }
    let mut csv = String::from("z,dev_acc\n");
    macro_rules! sweep {
        ($ty:ty) => {{
            let splits = load_splits::<$ty>(&cfg)?;
            for &z in z_list {
                let mut run = cfg.clone();
                run.z = z;
                let acc = sweep_dev_acc(&run, &splits)?;
                println!("z={z:<3} dev acc {acc:.4}");
                csv.push_str(&format!("{z},{acc}\n"));
            }
        }};
    }
    match cfg.task {
        Task::Classify => sweep!(Sample),
        Task::Match => sweep!(PairSample),
    }
    fs::create_dir_all(out)?;
    let path = out.join("sweep_z.csv");
    write(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn inspect(checkpoint: &Path, dataset: &Path, neuron: usize, top_n: usize, by_abs: bool, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let config = model.config();
    if !config.variant.is_dynamic() {
        return Err(fail(
            6,
            format!("{} checkpoints have no z to inspect", config.variant),
        ));
    }
    let z = config.sizes.z;
    if neuron >= z {
        return Err(fail(2, format!("neuron {neuron} out of range (z has {z} entries)")));
    }
    let mut samples: Vec<Sample> = match config.task {
        Task::Classify => load_tree_dataset(dataset, config.classes)?,
        // Each sentence of pair `i` becomes sample `2i` or `2i + 1`.
        Task::Match => load_pair_dataset(dataset)?
            .into_iter()
            .flat_map(|p| {
                [
                    Sample {
                        id: 2 * p.id,
                        tree: p.a,
                        label: p.label,
                    },
                    Sample {
                        id: 2 * p.id + 1,
                        tree: p.b,
                        label: p.label,
                    },
                ]
            })
            .collect(),
    };
    index_samples(&mut samples, model.vocab());

    let records = record_activations(&model, &samples, Execution::Parallel)?;
    fs::create_dir_all(out.join("heatmaps"))?;
    write(&out.join("activations.csv"), &activations_csv(&records, z))?;
    for s in &samples {
        let heatmap = export_heatmap(&model, s.id, &s.tree, neuron)?;
        write(&out.join("heatmaps").join(format!("sample_{}.json", s.id)), &heatmap.to_json())?;
    }

    let top = top_activating_phrases(&records, neuron, top_n, by_abs)?;
    println!(
        "{} records from {} samples; top {} phrases for neuron {neuron}:",
        records.len(),
        samples.len(),
        top.len()
    );
    for p in &top {
        println!("  {:>9.5}  {}", p.activation, p.phrase);
    }
    Ok(())
}

fn grouped(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn count_params(variant: &str, d: usize, e: Option<usize>, m: usize, z: usize) -> Result<()> {
    let variant: Variant = variant.parse()?;
    let sizes = Sizes::new(d, e.unwrap_or(d), m, z);
    sizes.validate(variant)?;
    let c = count(sizes, variant);
    println!("{variant} (d={}, e={}, m={m}, z={z})", sizes.d, sizes.e);
    println!("compositional parameters: {}", grouped(c.compositional));
    if variant.is_dynamic() {
        println!("meta network cell:        {}", grouped(c.meta_core));
    }
    println!("leaf projection:          {}", grouped(c.leaf));
    println!("composer total:           {}", grouped(c.composer_total()));
    println!("embedding per token:      {}", grouped(c.embedding_per_token));
    Ok(())
}
