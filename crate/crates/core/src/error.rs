use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Tensor;

/// `rows x cols`, used in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims(pub usize, pub usize);

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

impl From<&Tensor> for Dims {
    fn from(t: &Tensor) -> Self {
        Dims(t.rows(), t.cols())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left} and {right}")]
    Shape {
        op: &'static str,
        left: Dims,
        right: Dims,
    },
    #[error("{rows}x{cols} tensor cannot hold {len} values")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("slice {start}..{end} out of bounds for {rows} rows")]
    SliceOutOfBounds {
        start: usize,
        end: usize,
        rows: usize,
    },
    #[error("{op}: expected a column vector, got {rows}x{cols}")]
    NotVector {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("backward: loss must be a scalar, got {0}")]
    NotScalar(Dims),
    #[error("node does not belong to this tape")]
    ForeignNode,
    #[error("class index {gold} out of range for {classes} classes")]
    ClassOutOfRange { gold: usize, classes: usize },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: &Tensor, right: &Tensor) -> Self {
        TensorError::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced parentheses at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("empty node at offset {offset}")]
    EmptyNode { offset: usize },
    #[error("token contains a parenthesis at offset {offset}")]
    ParenInToken { offset: usize },
    #[error("unexpected content after tree at offset {offset}")]
    Trailing { offset: usize },
    #[error("empty input")]
    Empty,
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match *self {
            ParseError::Unbalanced { offset }
            | ParseError::EmptyNode { offset }
            | ParseError::ParenInToken { offset }
            | ParseError::Trailing { offset } => Some(offset),
            ParseError::Empty => None,
        }
    }
}

/// Failures while reading datasets and embedding files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: embedding width {found} does not match e={expected}")]
    Width {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: label {label} outside 0..{classes}")]
    LabelRange {
        line: usize,
        label: i64,
        classes: usize,
    },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("parameter {name:?}: expected shape {expected}, found {found}")]
    ParamShape {
        name: String,
        expected: Dims,
        found: Dims,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0} requires a dynamic variant")]
    StaticVariant(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("finite-difference oracle invalid: objective is not deterministic ({first} vs {second})")]
    NonDeterministic { first: f64, second: f64 },
    #[error("model is configured for {expected} but got {found} examples")]
    TaskMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("malformed tree: {0}")]
    Tree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
