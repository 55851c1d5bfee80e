//! Named parameter storage shared by the models, the optimizer and checkpoints.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Dims, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a tape leaf refers to: a whole parameter, or one row of it (used for
/// embedding lookups so a step only touches the rows it reads).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamSlot {
    Whole(ParamId),
    Row(ParamId, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
}

impl ParamKind {
    /// Biases and embeddings are exempt from L2 decay.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Ordered collection of named tensors. Insertion order is the canonical
/// serialization order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.params[i] = Param { name, kind, value };
            return ParamId(i);
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, kind, value });
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .map(ParamId)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Looks up `name` and checks its shape.
    pub fn id_with_shape(&self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let id = self.id(name)?;
        let value = &self.params[id.0].value;
        if value.shape() != (rows, cols) {
            return Err(Error::ParamShape {
                name: name.to_string(),
                expected: Dims(rows, cols),
                found: value.into(),
            });
        }
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Value of a slot as a tensor; rows are returned as column vectors.
    pub fn slot_value(&self, slot: ParamSlot) -> Result<Tensor> {
        match slot {
            ParamSlot::Whole(id) => Ok(self.get(id).clone()),
            ParamSlot::Row(id, row) => {
                let t = self.get(id);
                if row >= t.rows() {
                    return Err(crate::error::TensorError::SliceOutOfBounds {
                        start: row,
                        end: row + 1,
                        rows: t.rows(),
                    }
                    .into());
                }
                Ok(Tensor::vector(t.row(row)))
            }
        }
    }
}

/// Gradients keyed by parameter slot, in deterministic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrads {
    grads: BTreeMap<ParamSlot, Tensor>,
}

impl ParamGrads {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slot: ParamSlot, grad: Tensor) {
        self.grads.insert(slot, grad);
    }

    pub fn get(&self, slot: ParamSlot) -> Option<&Tensor> {
        self.grads.get(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamSlot, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Analytic derivative with respect to a single scalar entry of a
    /// parameter, combining whole-parameter and row-slot gradients.
    pub fn entry(&self, id: ParamId, row: usize, col: usize) -> f64 {
        let mut total = 0.0;
        if let Some(g) = self.grads.get(&ParamSlot::Whole(id)) {
            total += g.get(row, col);
        }
        if let Some(g) = self.grads.get(&ParamSlot::Row(id, row)) {
            total += g.data()[col];
        }
        total
    }
}
