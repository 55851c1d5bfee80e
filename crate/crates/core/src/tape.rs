//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation evaluates eagerly and appends a node to the tape. Node ids
//! are handed out in creation order, so the tape is always topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.
//!
//! Parameters enter the tape through [`Tape::bind`], which records which
//! [`ParamSlot`] a leaf stands for. Binding the same slot twice returns the
//! same node, so gradients from every use accumulate in one place.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Dims, TensorError};
use crate::params::{ParamGrads, ParamSlot, ParamStore};
use crate::tensor::{log_sum_exp, softmax, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

/// A deliberately wrong backward rule, used to show that gradient checking
/// catches broken derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the derivative of `tanh`.
    FlipTanhGrad,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    Diag(usize),
    Sum(usize),
    CrossEntropy { logits: usize, gold: usize, probs: Tensor },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation graph for one forward/backward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    bound: HashMap<ParamSlot, usize>,
    fault: Option<Fault>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            bound: HashMap::new(),
            fault: None,
        }
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self {
            fault,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, id: NodeId) -> Result<usize, TensorError> {
        if id.tape != self.id || id.index >= self.nodes.len() {
            return Err(TensorError::ForeignNode);
        }
        Ok(id.index)
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let i = self.idx(id).expect("node from another tape");
        &self.nodes[i].value
    }

    /// A leaf that receives no parameter gradient mapping.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize) -> NodeId {
        self.constant(Tensor::zeros(rows, 1))
    }

    /// Binds a parameter slot as a leaf, reusing an earlier binding.
    pub fn bind(&mut self, store: &ParamStore, slot: ParamSlot) -> crate::Result<NodeId> {
        if let Some(&index) = self.bound.get(&slot) {
            return Ok(NodeId {
                tape: self.id,
                index,
            });
        }
        let value = store.slot_value(slot)?;
        let id = self.push(value, Op::Leaf);
        self.bound.insert(slot, id.index);
        Ok(id)
    }

    /// Binds an explicit tensor under a slot; used when the value does not
    /// live in a [`ParamStore`].
    pub fn bind_value(&mut self, slot: ParamSlot, value: Tensor) -> NodeId {
        if let Some(&index) = self.bound.get(&slot) {
            return NodeId {
                tape: self.id,
                index,
            };
        }
        let id = self.push(value, Op::Leaf);
        self.bound.insert(slot, id.index);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::MatMul(ia, ib)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.add(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Add(ia, ib)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.sub(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Sub(ia, ib)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.mul(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Mul(ia, ib)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x * factor);
        Ok(self.push(v, Op::Scale(ia, factor)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.tanh();
        Ok(self.push(v, Op::Tanh(ia)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.sigmoid();
        Ok(self.push(v, Op::Sigmoid(ia)))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let idx = parts
            .iter()
            .map(|p| self.idx(*p))
            .collect::<Result<Vec<_>, _>>()?;
        let values: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor::concat_rows(&values)?;
        Ok(self.push(v, Op::ConcatRows(idx)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let idx = parts
            .iter()
            .map(|p| self.idx(*p))
            .collect::<Result<Vec<_>, _>>()?;
        let values: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor::concat_cols(&values)?;
        Ok(self.push(v, Op::ConcatCols(idx)))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.slice_rows(start, end)?;
        Ok(self.push(v, Op::SliceRows(ia, start)))
    }

    pub fn diag_from_vector(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.diag_from_vector()?;
        Ok(self.push(v, Op::Diag(ia)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let ia = self.idx(a)?;
        let v = Tensor::scalar(self.nodes[ia].value.sum());
        Ok(self.push(v, Op::Sum(ia)))
    }

    /// `-log softmax(logits)[gold]`, fused so that the log never sees a
    /// rounded-to-zero probability.
    pub fn cross_entropy(&mut self, logits: NodeId, gold: usize) -> Result<NodeId, TensorError> {
        let il = self.idx(logits)?;
        let l = &self.nodes[il].value;
        if l.cols() != 1 {
            return Err(TensorError::NotVector {
                op: "cross_entropy",
                rows: l.rows(),
                cols: l.cols(),
            });
        }
        if gold >= l.rows() {
            return Err(TensorError::ClassOutOfRange {
                gold,
                classes: l.rows(),
            });
        }
        let loss = log_sum_exp(l.data()) - l.data()[gold];
        let probs = softmax(l);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                gold,
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let il = self.idx(loss)?;
        let lv = &self.nodes[il].value;
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(Dims::from(lv)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; il + 1];
        grads[il] = Some(Tensor::filled(lv.rows(), lv.cols(), 1.0));

        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    let ga = g.matmul_t(bv)?;
                    let gb = av.t_matmul(&g)?;
                    add_grad(&mut grads, *a, ga)?;
                    add_grad(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *a, g.clone())?;
                    add_grad(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, *a, g.clone())?;
                    add_grad(&mut grads, *b, g.map(|x| -x))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(&self.nodes[*b].value)?;
                    let gb = g.mul(&self.nodes[*a].value)?;
                    add_grad(&mut grads, *a, ga)?;
                    add_grad(&mut grads, *b, gb)?;
                }
                Op::Scale(a, f) => add_grad(&mut grads, *a, g.map(|x| x * f))?,
                Op::Tanh(a) => {
                    let sign = if self.fault == Some(Fault::FlipTanhGrad) {
                        -1.0
                    } else {
                        1.0
                    };
                    let ga = g.zip_with(&node.value, "tanh'", |g, y| sign * g * (1.0 - y * y))?;
                    add_grad(&mut grads, *a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_with(&node.value, "sigmoid'", |g, y| g * y * (1.0 - y))?;
                    add_grad(&mut grads, *a, ga)?;
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let rows = self.nodes[p].value.rows();
                        add_grad(&mut grads, p, g.slice_rows(start, start + rows)?)?;
                        start += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let cols = self.nodes[p].value.cols();
                        add_grad(&mut grads, p, g.slice_cols(start, start + cols)?)?;
                        start += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let av = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    add_grad(&mut grads, *a, ga)?;
                }
                Op::Diag(a) => {
                    let n = g.rows();
                    let diag: Vec<f64> = (0..n).map(|k| g.get(k, k)).collect();
                    add_grad(&mut grads, *a, Tensor::vector(&diag))?;
                }
                Op::Sum(a) => {
                    let av = &self.nodes[*a].value;
                    let s = g.data()[0];
                    add_grad(&mut grads, *a, Tensor::filled(av.rows(), av.cols(), s))?;
                }
                Op::CrossEntropy {
                    logits,
                    gold,
                    probs,
                } => {
                    let s = g.data()[0];
                    let mut gl = probs.map(|p| p * s);
                    gl.data_mut()[*gold] -= s;
                    add_grad(&mut grads, *logits, gl)?;
                }
            }
            grads[i] = Some(g);
        }

        let mut params = ParamGrads::new();
        for (slot, &index) in &self.bound {
            if let Some(Some(g)) = grads.get(index) {
                params.insert(*slot, g.clone());
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            params,
        })
    }
}

fn add_grad(grads: &mut [Option<Tensor>], at: usize, g: Tensor) -> Result<(), TensorError> {
    match &mut grads[at] {
        Some(existing) => existing.accumulate(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if the loss depends on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        if id.tape != self.tape {
            return None;
        }
        self.grads.get(id.index).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}
