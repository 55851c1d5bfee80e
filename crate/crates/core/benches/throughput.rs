//! Sequential against data-parallel execution of the batch-shaped work:
//! evaluation and activation recording over the toy treebank.
//!
//! Without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dctree::analysis::record_activations;
use dctree::composers::Variant;
use dctree::model::Model;
use dctree::parallel::Execution;
use dctree::synth::{toy_treebank, ToyConfig};
use dctree::training::{build_model, evaluate, RunConfig};
use dctree::treebank::{build_vocab, index_samples, sample_sentences, Sample};

fn setup(variant: Variant, d: usize) -> (Model, Vec<Sample>) {
    let mut samples = toy_treebank(&ToyConfig {
        samples: 256,
        max_len: 12,
        ..ToyConfig::default()
    });
    let vocab = build_vocab(sample_sentences(&samples), 1);
    index_samples(&mut samples, &vocab);
    let mut cfg = RunConfig::default();
    cfg.variant = variant;
    (cfg.d, cfg.e, cfg.m, cfg.z) = (d, d, 20, 20);
    cfg.classes = 2;
    (build_model(&cfg, vocab).unwrap(), samples)
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (variant, d) in [(Variant::Treelstm, 50), (Variant::DcTreelstm, 50)] {
        let (model, samples) = setup(variant, d);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, variant), &exec, |b, &exec| {
                b.iter(|| evaluate(&model, &samples, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_activations(c: &mut Criterion) {
    let mut group = c.benchmark_group("record_activations");
    group.sample_size(10);
    let (model, samples) = setup(Variant::DcTreelstm, 50);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| record_activations(&model, &samples, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_activations);
criterion_main!(benches);
