//! Inspection of the controlling vector `z`: per-node recording, phrase
//! mining for a single neuron, and heatmap export.

use std::cmp::Ordering;

use serde::Serialize;

use crate::composers::NodeState;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::{self, Execution};
use crate::tensor::Tensor;
use crate::treebank::{BinaryTree, Sample};

/// `z` at one node of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationRecord {
    pub sample_id: usize,
    pub node_id: usize,
    pub phrase: String,
    pub z: Vec<f64>,
}

fn require_dynamic(model: &Model) -> Result<()> {
    let variant = model.config().variant;
    if variant.is_dynamic() {
        Ok(())
    } else {
        Err(Error::StaticVariant(variant.name()))
    }
}

fn z_values(states: &[NodeState<Tensor>]) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|s| s.z.as_ref().expect("dynamic variants record z").data().to_vec())
        .collect()
}

/// One record per node (leaves included, since leaves also get a `z`), in
/// sample order then post-order.
pub fn record_activations(model: &Model, samples: &[Sample], exec: Execution) -> Result<Vec<ActivationRecord>> {
    require_dynamic(model)?;
    let per_sample = parallel::try_map(exec, samples, |s| -> Result<Vec<ActivationRecord>> {
        let zs = z_values(&model.encode(&s.tree)?);
        Ok(zs
            .into_iter()
            .enumerate()
            .map(|(node_id, z)| ActivationRecord {
                sample_id: s.id,
                node_id,
                phrase: s.tree.phrase(node_id),
                z,
            })
            .collect())
    })?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// A mined phrase and its activation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPhrase {
    pub sample_id: usize,
    pub node_id: usize,
    pub phrase: String,
    pub activation: f64,
}

/// Records ranked by `z[neuron]` descending (or `|z[neuron]|` with
/// `by_abs`), ties by `(sample_id, node_id)`, truncated to `top_n`.
pub fn top_activating_phrases(
    records: &[ActivationRecord],
    neuron: usize,
    top_n: usize,
    by_abs: bool,
) -> Result<Vec<RankedPhrase>> {
    let mut ranked = Vec::with_capacity(records.len());
    for r in records {
        let v = *r.z.get(neuron).ok_or_else(|| {
            Error::Config(format!("neuron {neuron} out of range for z of length {}", r.z.len()))
        })?;
        ranked.push(RankedPhrase {
            sample_id: r.sample_id,
            node_id: r.node_id,
            phrase: r.phrase.clone(),
            activation: v,
        });
    }
    let key = |p: &RankedPhrase| if by_abs { p.activation.abs() } else { p.activation };
    ranked.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then(a.sample_id.cmp(&b.sample_id))
            .then(a.node_id.cmp(&b.node_id))
    });
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Per-node activation of one neuron over one sentence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub sample_id: usize,
    pub neuron: usize,
    pub tokens: Vec<String>,
    /// Parent of each node in post-order; `-1` for the root.
    pub parent: Vec<i64>,
    pub phrases: Vec<String>,
    pub raw: Vec<f64>,
    /// Min-max scaled to `[0, 1]`; all 0.5 when every value is equal.
    pub normalized: Vec<f64>,
}

impl Heatmap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("heatmap serializes")
    }
}

pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn export_heatmap(model: &Model, sample_id: usize, tree: &BinaryTree, neuron: usize) -> Result<Heatmap> {
    require_dynamic(model)?;
    let z = model.config().sizes.z;
    if neuron >= z {
        return Err(Error::Config(format!("neuron {neuron} out of range for z of length {z}")));
    }
    let raw: Vec<f64> = z_values(&model.encode(tree)?).into_iter().map(|z| z[neuron]).collect();
    Ok(Heatmap {
        sample_id,
        neuron,
        tokens: tree.tokens().to_vec(),
        parent: tree.parent_array(),
        phrases: (0..tree.len()).map(|i| tree.phrase(i)).collect(),
        normalized: min_max_normalize(&raw),
        raw,
    })
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// `sample_id,node_id,phrase,z_0,...,z_{Z-1}`. `z` is taken from the first
/// record; an empty slice yields just the header for width `z`.
pub fn activations_csv(records: &[ActivationRecord], z: usize) -> String {
    let mut out = String::from("sample_id,node_id,phrase");
    for k in 0..z {
        out.push_str(&format!(",z_{k}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.sample_id, r.node_id, csv_field(&r.phrase)));
        for v in &r.z {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
