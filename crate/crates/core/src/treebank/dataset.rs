use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sexpr::parse_sexpr;
use super::tree::{binarize, BinaryTree};
use super::vocab::Vocab;
use crate::error::DataError;

/// One classified sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub tree: BinaryTree,
    pub label: usize,
}

/// One sentence pair for 3-way semantic matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub id: usize,
    pub a: BinaryTree,
    pub b: BinaryTree,
    pub label: usize,
}

pub const PAIR_LABELS: [&str; 3] = ["entailment", "contradiction", "neutral"];

pub fn pair_label_index(label: &str) -> Option<usize> {
    let lower = label.to_ascii_lowercase();
    PAIR_LABELS.iter().position(|l| *l == lower)
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_tree_line(text: &str, line: usize) -> Result<(BinaryTree, Option<String>), DataError> {
    let labeled = parse_sexpr(text).map_err(|source| DataError::Parse { line, source })?;
    let tree = binarize(&labeled);
    let root_label = tree.node(tree.root()).label.clone();
    Ok((tree, root_label))
}

pub fn load_tree_dataset(path: &Path, classes: usize) -> Result<Vec<Sample>, DataError> {
    parse_tree_dataset(&read(path)?, classes)
}

/// One bracketed tree per line; the root label is the class id. Blank lines
/// are skipped.
pub fn parse_tree_dataset(text: &str, classes: usize) -> Result<Vec<Sample>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (tree, root) = parse_tree_line(line, line_no)?;
        let root = root.ok_or_else(|| DataError::Malformed {
            line: line_no,
            message: "root has no label".into(),
        })?;
        let value: i64 = root.parse().map_err(|_| DataError::UnknownLabel {
            line: line_no,
            label: root.clone(),
        })?;
        if value < 0 || value as usize >= classes {
            return Err(DataError::LabelRange {
                line: line_no,
                label: value,
                classes,
            });
        }
        out.push(Sample {
            id: out.len(),
            tree,
            label: value as usize,
        });
    }
    Ok(out)
}

pub fn load_pair_dataset(path: &Path) -> Result<Vec<PairSample>, DataError> {
    parse_pair_dataset(&read(path)?)
}

/// `tree_a<TAB>tree_b<TAB>label` per line with label in
/// {entailment, contradiction, neutral}.
pub fn parse_pair_dataset(text: &str) -> Result<Vec<PairSample>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(DataError::Malformed {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (a, _) = parse_tree_line(cols[0], line_no)?;
        let (b, _) = parse_tree_line(cols[1], line_no)?;
        let label = pair_label_index(cols[2].trim()).ok_or_else(|| DataError::UnknownLabel {
            line: line_no,
            label: cols[2].trim().to_string(),
        })?;
        out.push(PairSample {
            id: out.len(),
            a,
            b,
            label,
        });
    }
    Ok(out)
}

/// Token sequences of every tree, for vocabulary building.
pub fn sample_sentences(samples: &[Sample]) -> impl Iterator<Item = &[String]> {
    samples.iter().map(|s| s.tree.tokens())
}

pub fn pair_sentences(samples: &[PairSample]) -> impl Iterator<Item = &[String]> {
    samples
        .iter()
        .flat_map(|s| [s.a.tokens(), s.b.tokens()])
}

pub fn index_samples(samples: &mut [Sample], vocab: &Vocab) {
    for s in samples {
        s.tree.index_with(vocab);
    }
}

pub fn index_pairs(samples: &mut [PairSample], vocab: &Vocab) {
    for s in samples {
        s.a.index_with(vocab);
        s.b.index_with(vocab);
    }
}
